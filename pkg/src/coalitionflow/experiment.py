"""Experiment runner: builds matrices, sources and controllers from a config,
dispatches (pair, trial) simulations over a worker pool, aggregates per pair
and across pairs, and writes the CSV/summary/figure outputs.

Trial streams are keyed by (seed, purpose, pair, trial), so results are
byte-identical regardless of worker count.
"""

from __future__ import annotations

import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coalitions import is_balanced
from .config import ExperimentConfig
from .controllers import (
    DiscreteApproachController,
    make_full,
    make_partial,
    stationary_control,
)
from .diagnostics import DiagnosticReport, build_report
from .dynamics import FlowDynamics, SimConfig, run_discrete, run_trajectory, trial_rng
from .linalg import SystemMatrices
from .sources import FiniteSupportProcess, generate_support

STREAM_SUPPORT = 0
STREAM_TRIAL = 1

FLOAT_FMT = "%.17g"


def _fmt(value: float) -> str:
    return FLOAT_FMT % value


def build_controller(cfg: ExperimentConfig, mats: SystemMatrices):
    if cfg.kind == "full":
        return make_full(
            cfg.u_nom, cfg.v_nom, cfg.bounds, cfg.v_cap, mats, mode=cfg.threshold_mode
        )
    if cfg.kind == "partial":
        return make_partial(cfg.u_nom, cfg.delta, cfg.v_nom, cfg.bounds, cfg.v_cap, mats)
    if cfg.kind == "discrete-approach":
        inner = make_partial(cfg.u_nom, cfg.delta, cfg.v_nom, cfg.bounds, cfg.v_cap, mats)
        return DiscreteApproachController(inner=inner)
    if cfg.kind == "stationary":
        return stationary_control(cfg.u_nom)
    raise ValueError(f"unknown controller kind {cfg.kind!r}")


def build_dynamics(cfg: ExperimentConfig, mats: SystemMatrices) -> FlowDynamics:
    from .controllers import feasible_control_box

    lo, hi = feasible_control_box(cfg.bounds, mats.m - 1, cfg.v_cap)
    return FlowDynamics(mats=mats, u_nom=cfg.u_nom, u_lo=lo, u_hi=hi)


def zero_band(cfg: ExperimentConfig) -> float:
    """Chattering band around zero: one sign-feedback step's worth of motion."""
    return 10.0 * cfg.delta * cfg.dt


@dataclass
class TrialResult:
    pair: int
    trial: int
    report: DiagnosticReport
    times: np.ndarray
    xs: np.ndarray
    ratios: np.ndarray
    abars: np.ndarray
    lyap_series: np.ndarray
    eps_series: np.ndarray


def _run_task(args) -> TrialResult:
    cfg, mats, controller, dyn, support, weights, pair, trial = args
    source = FiniteSupportProcess(
        support=support, weights=weights, box=cfg.box, attempts=0
    )
    sim = SimConfig(
        dt=cfg.dt,
        steps=cfg.steps,
        seed=cfg.seed,
        trials=cfg.trials,
        epsilon0=cfg.epsilon0,
        x0=cfg.x0,
        y0=cfg.y0,
        stride=cfg.stride,
    )
    rng = trial_rng(cfg.seed, STREAM_TRIAL, pair, trial)
    if cfg.kind == "discrete-approach":
        record = run_discrete(sim, controller, source, dyn, rng=rng)
    else:
        record = run_trajectory(
            sim, controller, source, dyn, rng=rng, check_oracle=(cfg.kind == "partial")
        )
    report = build_report(
        record, cfg.v_nom, cfg.a_nom, cfg.s_nom, mats.incidence, band=zero_band(cfg)
    )
    record.drop_bulk()
    return TrialResult(
        pair=pair,
        trial=trial,
        report=report,
        times=record.times,
        xs=record.xs,
        ratios=record.ratios,
        abars=record.abars,
        lyap_series=record.lyap_series,
        eps_series=record.eps_series,
    )


def _aggregate(reports: list[DiagnosticReport]) -> dict[str, float]:
    keys = reports[0].as_dict().keys()
    out = {}
    for key in keys:
        vals = [r.as_dict()[key] for r in reports]
        if any(v is None for v in vals):
            continue
        out[key] = float(np.mean(vals))
    return out


def write_trajectory_csv(path: str, cfg: ExperimentConfig, results: list[TrialResult]) -> None:
    m, n = cfg.m, cfg.n
    header = (
        ["t", "trial", "pair"]
        + [f"x_{j + 1}" for j in range(m)]
        + [f"ratio_{j + 1}" for j in range(m)]
        + [f"abar_{i + 1}" for i in range(n)]
        + ["V"]
        + [f"eps_{j + 1}" for j in range(m)]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for res in results:
            for row in range(res.times.size):
                cells = [
                    _fmt(res.times[row]),
                    str(res.trial),
                    str(res.pair),
                    *(_fmt(v) for v in res.xs[row]),
                    *(_fmt(v) for v in res.ratios[row]),
                    *(_fmt(v) for v in res.abars[row]),
                    _fmt(res.lyap_series[row]),
                    *(_fmt(v) for v in res.eps_series[row]),
                ]
                fh.write(",".join(cells) + "\n")


def write_summary(
    path: str,
    cfg: ExperimentConfig,
    mats: SystemMatrices,
    controller,
    sources: list[FiniteSupportProcess],
    results: list[TrialResult],
    aggregate: dict[str, float],
) -> None:
    lines = [
        f"experiment.kind = {cfg.kind}",
        f"experiment.pairs = {cfg.pairs}",
        f"experiment.trials = {cfg.trials}",
        f"experiment.steps = {cfg.steps}",
        f"experiment.dt = {_fmt(cfg.dt)}",
        f"experiment.seed = {cfg.seed}",
        f"matrices.row_sum_bound = {_fmt(mats.abs_row_sum_max())}",
        f"matrices.nominal_residual = {_fmt(float(np.abs(mats.B @ cfg.u_nom - cfg.v_nom).max()))}",
    ]
    audit = getattr(controller, "audit", None) or getattr(
        getattr(controller, "inner", None), "audit", None
    )
    if audit is not None:
        lines += [
            f"audit.row_sum_bound = {_fmt(audit.row_sum_bound)}",
            f"audit.conservative_ok = {str(audit.conservative_ok).lower()}",
            f"audit.exhaustive_ok = "
            + ("none" if audit.exhaustive_ok is None else str(audit.exhaustive_ok).lower()),
            f"audit.passed = {str(audit.passed).lower()}",
        ]
    for k, src in enumerate(sources):
        lines.append(f"pair.{k}.generation_attempts = {src.attempts}")
    by_pair: dict[int, list[DiagnosticReport]] = {}
    for res in results:
        by_pair.setdefault(res.pair, []).append(res.report)
    for pair in sorted(by_pair):
        agg = _aggregate(by_pair[pair])
        for key in sorted(agg):
            lines.append(f"pair.{pair}.{key} = {_fmt(agg[key])}")
    for key in sorted(aggregate):
        lines.append(f"aggregate.{key} = {_fmt(aggregate[key])}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    workers: int | None = None,
    quiet: bool = False,
    plots: bool | None = None,
) -> dict:
    """Run the configured experiment end to end; returns the aggregate summary."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    mats = SystemMatrices.for_players(cfg.n)

    if not is_balanced(cfg.v_nom, mats.incidence):
        raise RuntimeError(
            "the nominal game has an empty core, so no allocation rule can make "
            "average allocations converge to it; core-convergence experiments refused"
        )

    controller = build_controller(cfg, mats)
    dyn = build_dynamics(cfg, mats)

    sources = [
        generate_support(cfg.box, cfg.v_nom, trial_rng(cfg.seed, STREAM_SUPPORT, k))
        for k in range(cfg.pairs)
    ]

    tasks = [
        (cfg, mats, controller, dyn, sources[pair].support, sources[pair].weights, pair, trial)
        for pair in range(cfg.pairs)
        for trial in range(cfg.trials)
    ]
    n_workers = workers if workers is not None else (os.cpu_count() or 1)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        # keep the pool's serialization boundary: BLAS results depend on
        # buffer alignment, and byte-identical output across worker counts
        # requires feeding the task through the same roundtrip
        results = [_run_task(pickle.loads(pickle.dumps(t))) for t in tasks]
    results.sort(key=lambda r: (r.pair, r.trial))

    aggregate = _aggregate([r.report for r in results])

    csv_path = os.path.join(out_dir, "trajectory.csv")
    summary_path = os.path.join(out_dir, "summary.txt")
    write_trajectory_csv(csv_path, cfg, results)
    write_summary(summary_path, cfg, mats, controller, sources, results, aggregate)
    outputs = {"trajectory": csv_path, "summary": summary_path}

    do_plots = cfg.plots if plots is None else plots
    if do_plots:
        from .plots import render_figures

        outputs["figures"] = render_figures(cfg, results, out_dir)

    if not quiet:
        print(f"wrote {csv_path}")
        print(f"wrote {summary_path}")
        for fig in outputs.get("figures", []):
            print(f"wrote {fig}")
        for key in sorted(aggregate):
            print(f"{key} = {aggregate[key]:.6g}")
    return {"aggregate": aggregate, "outputs": outputs, "results": results}
