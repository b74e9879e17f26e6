import pytest

from tapermle.utils import CLIprinter


@pytest.fixture
def printer():
    return CLIprinter()


def test_levels_print_to_stderr(printer, capsys):
    printer.progress("drawing")
    printer.success("written")
    printer.warning("slow")
    printer.error("failed")
    captured = capsys.readouterr()
    assert captured.out == ""
    for word in ("drawing", "written", "slow", "failed"):
        assert word in captured.err


def test_quiet_keeps_warnings_and_errors(printer, capsys):
    printer.quiet = True
    printer.progress("drawing")
    printer.success("written")
    printer.warning("slow")
    printer.error("failed")
    err = capsys.readouterr().err
    assert "drawing" not in err
    assert "written" not in err
    assert "slow" in err
    assert "failed" in err


def test_only_the_four_levels_remain(printer):
    for name in ("info", "warn", "done", "prog"):
        assert not hasattr(printer, name)
