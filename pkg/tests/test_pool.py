import time

import pytest

from tapermle.errors import ConfigError
from tapermle.pool import THREADS_ENV, resolve_threads, run_ordered


def slow_square(x):
    # later items finish first
    time.sleep(0.002 * (10 - x))
    return x * x


@pytest.mark.parametrize("threads", [1, 4])
def test_run_ordered_keeps_item_order(threads):
    assert run_ordered(slow_square, range(10), threads=threads, quiet=True) == [
        x * x for x in range(10)
    ]


def test_run_ordered_propagates_errors():
    def boom(x):
        if x == 3:
            raise ValueError("bad item")
        return x

    with pytest.raises(ValueError, match="bad item"):
        run_ordered(boom, range(6), threads=2, quiet=True)


def test_run_ordered_empty():
    assert run_ordered(slow_square, [], threads=3, quiet=True) == []


def test_resolve_threads_precedence(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads(3, 2) == 3
    assert resolve_threads(None, 2) == 2
    assert resolve_threads() >= 1
    monkeypatch.setenv(THREADS_ENV, "5")
    assert resolve_threads(3, 2) == 5


@pytest.mark.parametrize("value", ["many", "0", "-2"])
def test_resolve_threads_rejects_bad_env(monkeypatch, value):
    monkeypatch.setenv(THREADS_ENV, value)
    with pytest.raises(ConfigError) as e:
        resolve_threads()
    assert e.value.key == THREADS_ENV


def test_resolve_threads_rejects_bad_config(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    with pytest.raises(ConfigError):
        resolve_threads(None, 0)
