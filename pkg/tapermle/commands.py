"""
Command workflows.

This module implements what each CLI subcommand does, on a validated
RunConfig:
- cmd_simulate: design + exact draw, CSV dataset and JSON provenance sidecar
- cmd_fit: closed-form fixed-theta or boxed exponential MLE on a CSV dataset
- cmd_mc: microergodic, gap and proximity Monte Carlo experiments
- cmd_diag: taper and determinant diagnostics in one JSON report
- cmd_bench: dense against banded likelihood timings
"""

import csv
import math
import time
from functools import partial
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from tapermle.asymptotics import (
    McConfig,
    box_grid,
    gap_trace,
    mc_microergodic,
    sigma2_proximity,
    simulate_truth,
    trace_gap_theorem3,
)
from tapermle.baseconf import RunConfig
from tapermle.covmodel import CovFamily, TaperSpec, check_a2_slope, check_a3, lemma4_report
from tapermle.data import read_csv, write_csv
from tapermle.errors import (
    AcceptanceError,
    ConfigError,
    ConvergenceError,
    DiagnosticError,
    TaperMleError,
)
from tapermle.likelihood import (
    FitResult,
    exact_loglik,
    joint_mle_exponential,
    sigma2_mle_fixed_theta,
    tapered_loglik,
)
from tapermle.linalg import build_tapered, det_ratio_check, write_band_dump
from tapermle.simulate import regular_design
from tapermle.utils import msg, showbox_table, write_json


def _require(value: Any, key: str) -> Any:
    if value is None:
        raise ConfigError(key, "missing required key")
    return value


def sidecar_path(data_path: str | Path) -> Path:
    """data.csv -> data.json"""
    return Path(data_path).expanduser().with_suffix(".json")


def write_z_csv(rows, path: str | Path) -> Path:
    """Standardized statistics as "n,replicate,z,tapered" rows."""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["n", "replicate", "z", "tapered"])
        for n, r, z, tapered in rows:
            writer.writerow([n, r, f"{z:.17g}", str(tapered).lower()])
    msg.success(f"Wrote: [u magenta]{path}[/u magenta]")
    return path


def cmd_simulate(conf: RunConfig, output: Optional[str] = None) -> Path:
    """
    Simulate one realization and write it with its provenance sidecar.

    Returns:
        Path: The CSV dataset path.
    """
    out = Path(_require(output or conf.output.data, "output.data")).expanduser()
    design = conf.design.build(conf.seed)
    msg.progress(f"Simulating {conf.model.family.value} process at n={design.n}")
    data = simulate_truth(design, conf.model, conf.seed, 0)
    write_csv(data, out)
    msg.success(f"Wrote: [u magenta]{out}[/u magenta]")

    sidecar = {"command": "simulate", **conf.provenance(), "n": design.n, "data": out.name}
    write_json(sidecar, sidecar_path(out))
    return out


def _fit_taper(conf: RunConfig) -> TaperSpec:
    return conf.taper if conf.estimator.tapered else TaperSpec.none()


def cmd_fit(dataset_path: str, conf: RunConfig, output: Optional[str] = None) -> FitResult:
    """
    Run the configured estimator on a CSV dataset and emit FitResult JSON.

    Raises:
        DesignError: Unreadable CSV or duplicate locations (exit 2).
        FactorizationError: Non-PD covariance (exit 3).
        ConvergenceError: No finite likelihood in the box (exit 5).
    """
    data = read_csv(dataset_path)
    taper = _fit_taper(conf)
    kind = conf.estimator.kind
    if kind == "fixed":
        theta1 = _require(conf.estimator.theta1, "estimator.theta1")
        fit = sigma2_mle_fixed_theta(data, theta1, conf.model.nu, taper)
    else:
        if conf.model.family is not CovFamily.EXPONENTIAL:
            raise ConfigError("estimator.kind", "joint fit covers the exponential family only")
        box = _require(conf.box, "box")
        fit = joint_mle_exponential(data, box, taper)
        if not fit.converged:
            raise ConvergenceError("no finite likelihood value inside the parameter box")

    showbox_table(
        "Fit",
        ["estimator", "n", "theta", "sigma2", "microergodic", "loglik"],
        [[kind, fit.n, fit.theta_hat, fit.sigma2_hat, fit.microergodic, fit.loglik]],
    )
    record = {
        "command": "fit",
        "dataset": str(dataset_path),
        "estimator": kind,
        **fit.to_dict(),
        "taper": taper.to_dict(),
    }
    write_json(record, output or conf.output.fit)
    return fit


def _mc_n_list(conf: RunConfig) -> list[int]:
    if conf.mc.n_list:
        return conf.mc.n_list
    return [_require(conf.design.n, "mc.n_list")]


def _run_microergodic(conf: RunConfig, threads: int, quiet: bool) -> tuple[dict, bool]:
    theta1 = conf.mc.theta1
    box = None
    if theta1 is None:
        box = conf.box
        if box is None:
            raise ConfigError("mc.theta1", "give mc.theta1 or a parameter box")
    config = McConfig(
        truth=conf.model,
        taper=conf.taper,
        n_list=tuple(_mc_n_list(conf)),
        replicates=conf.mc.replicates,
        seed=conf.seed,
        theta1=theta1,
        box=box,
        design_kind=conf.design.kind,
        jitter=conf.design.jitter,
    )
    summary = mc_microergodic(config, threads=threads, quiet=quiet)
    acc = conf.mc.acceptance
    checks = summary.accept(acc.var_tol, acc.mean_tol, acc.ks_alpha)
    record = summary.to_dict()
    record["acceptance"] = checks
    showbox_table(
        "Microergodic",
        ["n", "tapered", "mean", "exact mean", "var", "target", "ks_p", "passed"],
        [
            [
                e["n"],
                e["tapered"],
                e["mean"],
                e.get("expected_mean"),
                e.get("var"),
                summary.target_var,
                e.get("ks_p"),
                c["passed"],
            ]
            for e, c in zip(record["results"], checks)
        ],
    )
    if conf.output.z_csv:
        write_z_csv(summary.z_rows(), conf.output.z_csv)
    return record, all(c["passed"] for c in checks)


def _gap_grid(conf: RunConfig) -> list[tuple[float, float]]:
    if conf.mc.grid:
        return conf.mc.grid
    if conf.mc.theta1 is not None:
        matched = conf.model.matched(conf.mc.theta1)
        return [(matched.theta, matched.sigma2)]
    if conf.box is not None:
        return box_grid(conf.box)
    return [(conf.model.theta, conf.model.sigma2)]


def _run_gap(conf: RunConfig, threads: int, quiet: bool) -> tuple[dict, bool]:
    trace = gap_trace(
        conf.model,
        _gap_grid(conf),
        conf.taper,
        _require(conf.mc.n_list, "mc.n_list"),
        conf.seed,
        replicates=conf.mc.seeds,
        derivatives=conf.mc.derivatives,
        threads=threads,
        quiet=quiet,
    )
    record = trace.to_dict()
    # exponential: o(√n) rate; matern at fixed theta: O(1)
    if conf.model.family is CovFamily.EXPONENTIAL:
        name, check = "rate", trace.rate_check()
    else:
        name, check = "bounded", trace.bounded_check()
    record["acceptance"] = {"check": name, "passed": check["passes"]}
    return record, check["passes"]


def _run_proximity(conf: RunConfig, threads: int, quiet: bool) -> tuple[dict, bool]:
    trace = sigma2_proximity(
        conf.model,
        _require(conf.mc.theta1, "mc.theta1"),
        conf.taper,
        _require(conf.mc.n_list, "mc.n_list"),
        conf.seed,
        replicates=conf.mc.seeds,
        threads=threads,
        quiet=quiet,
    )
    record = trace.to_dict()
    passed = record["envelope_check"]["passes"]
    record["acceptance"] = {"check": "envelope", "passed": passed}
    return record, passed


EXPERIMENTS: dict[str, Callable[[RunConfig, int, bool], tuple[dict, bool]]] = {
    "microergodic": _run_microergodic,
    "gap": _run_gap,
    "proximity": _run_proximity,
}


def cmd_mc(conf: RunConfig, threads: int = 1, quiet: bool = False) -> dict:
    """
    Run the configured Monte Carlo experiment and write its JSON summary.

    Raises:
        AcceptanceError: After writing the outputs, if a threshold failed.
    """
    msg.progress(f"Running {conf.mc.experiment} experiment on {threads} thread(s)")
    record, passed = EXPERIMENTS[conf.mc.experiment](conf, threads, quiet)
    record = {"command": "mc", **record}
    write_json(record, conf.output.summary)
    if not passed:
        raise AcceptanceError(
            f"{conf.mc.experiment} experiment did not meet its acceptance thresholds"
        )
    msg.success("Acceptance thresholds met.")
    return record


def _diagnostic(name: str, func: Callable[[], dict], errors: list[str]) -> dict:
    try:
        return func()
    except TaperMleError as e:
        errors.append(name)
        msg.warning(f"{name}: {e}")
        return {"status": "error", "reason": str(e)}


def _skipped(reason: str) -> dict:
    return {"status": "skipped", "reason": reason}


def _passfail(ok: bool) -> str:
    return "pass" if ok else "fail"


def cmd_diag(conf: RunConfig, output: Optional[str] = None) -> dict:
    """
    Taper conditions, determinant inequality and trace gap in one report.

    Unsatisfied diagnostics are reported inline.

    Raises:
        DiagnosticError: After writing the report, if some diagnostic could not
            be evaluated.
    """
    model, taper = conf.model, conf.taper
    errors: list[str] = []
    design = conf.design.build(conf.seed) if conf.design.n else None
    report: dict[str, Any] = {"command": "diag", **conf.provenance()}
    no_taper = "taper is none"
    no_design = "design.n not configured"

    if taper.is_identity:
        report["a2"] = _skipped(no_taper)
        report["a3"] = _skipped(no_taper)
        report["lemma4"] = _skipped(no_taper)
    else:
        report["a2"] = _diagnostic(
            "a2", lambda: {"status": "pass", "slope": check_a2_slope(taper)}, errors
        )

        def a3() -> dict:
            rep = check_a3(taper, model.nu, conf.diag.lambda_max)
            return {"status": _passfail(rep.satisfied), **rep.to_dict()}

        def lemma4() -> dict:
            rep = lemma4_report(model, taper, conf.diag.lambda_grid)
            return {"status": _passfail(rep.satisfied), **rep.to_dict()}

        report["a3"] = _diagnostic("a3", a3, errors)
        report["lemma4"] = _diagnostic("lemma4", lemma4, errors)

    if design is None:
        report["a1"] = _skipped(no_design)
        report["det_ratio"] = _skipped(no_design)
        report["theorem3"] = _skipped(no_design)
    else:

        def a1() -> dict:
            c1, c2 = design.a1_constants()
            return {"status": "pass", "c1": c1, "c2": c2}

        def det_ratio() -> dict:
            rep = det_ratio_check(design, model, taper)
            return {"status": _passfail(rep.passes), **rep.to_dict()}

        def theorem3() -> dict:
            alt = conf.diag.alt_model
            value = trace_gap_theorem3(design, model, alt)
            matched = math.isclose(alt.microergodic, model.microergodic, rel_tol=1e-12)
            return {
                "status": "pass",
                "value": value,
                "alt_model": alt.to_dict(),
                "matched": matched,
            }

        report["a1"] = _diagnostic("a1", a1, errors)
        report["det_ratio"] = _diagnostic("det_ratio", det_ratio, errors)
        if conf.diag.alt_model is None:
            report["theorem3"] = _skipped("diag.alt_model not configured")
        else:
            report["theorem3"] = _diagnostic("theorem3", theorem3, errors)
        if conf.diag.band_dump and not taper.is_identity:
            path = write_band_dump(build_tapered(design, model, taper), conf.diag.band_dump)
            msg.success(f"Wrote: [u magenta]{path}[/u magenta]")

    showbox_table(
        "Diagnostics",
        ["check", "status"],
        [
            [name, entry["status"]]
            for name, entry in report.items()
            if isinstance(entry, dict) and "status" in entry
        ],
    )
    write_json(report, output or conf.output.report)
    if errors:
        raise DiagnosticError(f"diagnostics failed to evaluate: {', '.join(errors)}")
    return report


def _median_time(func: Callable[[], float], runs: int) -> float:
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        func()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def cmd_bench(conf: RunConfig, output: Optional[str] = None) -> dict:
    """
    Median wall-clock of the dense exact and the banded tapered log-likelihood.

    Raises:
        ConfigError: If the taper is none, since there is no band to exploit.
    """
    taper = conf.taper
    if taper.is_identity:
        raise ConfigError("taper.family", "bench needs a compactly supported taper")
    model, runs = conf.model, conf.bench.runs
    entries = []
    for n in conf.bench.n_list:
        msg.progress(f"Timing n={n}")
        data = simulate_truth(regular_design(n), model, conf.seed, 0)
        bandwidth = build_tapered(data.design, model, taper).bandwidth
        dense = _median_time(partial(exact_loglik, data, model, method="dense", strict=True), runs)
        banded = _median_time(partial(tapered_loglik, data, model, taper, strict=True), runs)
        speedup = dense / banded if banded > 0 else math.inf
        entries.append(
            dict(n=n, bandwidth=bandwidth, dense_s=dense, banded_s=banded, speedup=speedup)
        )
        if speedup < 2.0:
            msg.warning(f"n={n}: banded evaluation only {speedup:.2f}x faster than dense")

    showbox_table(
        "Bench",
        ["n", "bandwidth", "dense [s]", "banded [s]", "speedup"],
        [[e["n"], e["bandwidth"], e["dense_s"], e["banded_s"], e["speedup"]] for e in entries],
    )
    record = {
        "command": "bench",
        "model": model.to_dict(),
        "taper": taper.to_dict(),
        "runs": runs,
        "results": entries,
    }
    write_json(record, output or conf.output.report)
    return record
