"""Convergence diagnostics: Lyapunov trends, approachability and attainability
statistics, and target-cone membership of the normalized excesses.

The underlying guarantees are expectation inequalities, so every statistic
here is a window or trial average with an explicit spread, never a pointwise
claim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TrajectoryRecord


def lyapunov(w: np.ndarray) -> float:
    """Half squared Euclidean norm."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite input to the Lyapunov function")
    return 0.5 * float(w @ w)


def window_means(series: np.ndarray, frac: float = 0.1, burn_frac: float = 0.0) -> tuple[float, float]:
    """Means of the leading window (after burn-in) and the trailing window."""
    series = np.asarray(series, dtype=float)
    width = max(1, int(round(frac * series.size)))
    burn = int(round(burn_frac * series.size))
    first = series[burn : burn + width]
    last = series[-width:]
    return float(first.mean()), float(last.mean())


def lyapunov_trend(record: TrajectoryRecord, frac: float = 0.1) -> float:
    """Least-squares slope of the Lyapunov series over its trailing window."""
    series = record.lyap_full
    width = max(2, int(round(frac * series.size)))
    tail = series[-width:]
    t = np.arange(tail.size) * record.dt
    slope = np.polyfit(t, tail, 1)[0]
    return float(slope)


def approachability_stat(records: list[TrajectoryRecord]) -> float:
    """Trial- and time-averaged pairing of the running mean increment with the
    next increment, computed from the stored discrete paths.

    Zero or below (up to sampling noise) certifies that the running average
    of the increments approaches the origin.
    """
    if not records:
        raise ValueError("need at least one record")
    per_trial = []
    for rec in records:
        if rec.x_full is None:
            raise ValueError("record does not carry a full discrete path")
        xs = rec.x_full
        steps = xs.shape[0] - 1
        increments = np.diff(xs, axis=0)  # row k is x_{k+1} - x_k
        ks = np.arange(1, steps)
        running_means = (xs[1:steps] - rec.x0) / ks[:, None]
        vals = np.einsum("ij,ij->i", running_means, increments[1:])
        per_trial.append(vals.mean())
    return float(np.mean(per_trial))


def attainability_stat(
    record: TrajectoryRecord, band: float
) -> tuple[float, float, int, int]:
    """(mean of x^T xdot off the zero band, norm of the mean drift inside it,
    off-band count, in-band count).

    With no off-band steps the first slot is reported as 0 with count 0.
    """
    off = record.xnorm1_full > band
    n_off = int(off.sum())
    n_in = int((~off).sum())
    off_mean = float(record.xtxdot_full[off].mean()) if n_off else 0.0
    if n_in and record.xdot_full is not None:
        drift = record.xdot_full[~off].mean(axis=0)
        in_drift = float(np.linalg.norm(drift))
    else:
        in_drift = 0.0
    return off_mean, in_drift, n_off, n_in


@dataclass(frozen=True)
class TargetSummary:
    """Normalized excess drift against the nonnegative target cone."""

    tau: np.ndarray
    grand_component: float
    cone_violation: float
    direction_error: float


def target_membership(record: TrajectoryRecord, s_nom: np.ndarray) -> TargetSummary:
    """Check where (eps(T) - eps(0)) / T landed relative to the target cone.

    direction_error compares eps(T)/T against the nominal surplus direction
    (zero for the grand coalition); cone_violation is the max-norm of the
    negative part of eps(T).
    """
    if record.t_final <= 0:
        raise ValueError("record has zero duration")
    tau = (record.eps_final - record.eps0) / record.t_final
    s_nom = np.asarray(s_nom, dtype=float)
    direction = np.concatenate([s_nom, [0.0]])
    return TargetSummary(
        tau=tau,
        grand_component=float(tau[-1]),
        cone_violation=float(np.maximum(0.0, -record.eps_final).max()),
        direction_error=float(np.abs(record.eps_final / record.t_final - direction).max()),
    )


@dataclass(frozen=True)
class DiagnosticReport:
    """Scalar convergence summary of one run (or an aggregate of runs)."""

    lyapunov_trend: float
    lyapunov_first_window: float
    lyapunov_last_window: float
    attain_stat: float
    attain_zero_drift: float
    core_violation_of_mean: float
    excess_cone_violation: float
    direction_error: float
    avg_alloc_error: float
    ratio_inf: float
    approach_stat: float | None = None
    oracle_mismatches: int = 0

    def validate(self) -> None:
        for name, value in self.as_dict().items():
            if value is not None and not np.isfinite(value):
                raise ValueError(f"diagnostic field {name} is not finite")

    def as_dict(self) -> dict[str, float | None]:
        return {
            "lyapunov_trend": self.lyapunov_trend,
            "lyapunov_first_window": self.lyapunov_first_window,
            "lyapunov_last_window": self.lyapunov_last_window,
            "attain_stat": self.attain_stat,
            "attain_zero_drift": self.attain_zero_drift,
            "core_violation_of_mean": self.core_violation_of_mean,
            "excess_cone_violation": self.excess_cone_violation,
            "direction_error": self.direction_error,
            "avg_alloc_error": self.avg_alloc_error,
            "ratio_inf": self.ratio_inf,
            "approach_stat": self.approach_stat,
            "oracle_mismatches": float(self.oracle_mismatches),
        }


def build_report(
    record: TrajectoryRecord,
    v_nom: np.ndarray,
    a_nom: np.ndarray,
    s_nom: np.ndarray,
    incidence: np.ndarray,
    band: float,
) -> DiagnosticReport:
    """Assemble the per-run diagnostic summary."""
    from .coalitions import core_violation

    first, last = window_means(record.lyap_full)
    attain, drift, _, _ = attainability_stat(record, band)
    target = target_membership(record, s_nom)
    abar = record.abar_final
    approach = None
    if record.x_full is not None:
        approach = approachability_stat([record])
    report = DiagnosticReport(
        lyapunov_trend=lyapunov_trend(record),
        lyapunov_first_window=first,
        lyapunov_last_window=last,
        attain_stat=attain,
        attain_zero_drift=drift,
        core_violation_of_mean=core_violation(v_nom, abar, incidence),
        excess_cone_violation=target.cone_violation,
        direction_error=target.direction_error,
        avg_alloc_error=float(np.abs(abar - a_nom).max()),
        ratio_inf=float(np.abs(record.ratio_final).max()),
        approach_stat=approach,
        oracle_mismatches=record.oracle_mismatches,
    )
    report.validate()
    return report
