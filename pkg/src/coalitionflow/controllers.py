"""Allocation rules: saturated full-observation feedback, ternary sign feedback
with its oracle channel, the discrete running-average rule, and the stationary
baseline. Every controller returns a control that is feasible by construction,
either through precomputed saturation thresholds or through an explicit clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coalitions import AllocationBounds
from .linalg import SystemMatrices, saturate, sign_vector

NOMINAL_TOL = 1e-9
EXHAUSTIVE_AUDIT_MAX_M = 15


def feasible_control_box(
    bounds: AllocationBounds, n_surplus: int, cap: float
) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise [lo, hi] for the stacked control [allocation; surplus].

    Negative allocations/surpluses are never allowed and nothing may exceed
    the grand-coalition cap; the allocation part additionally respects its
    own box.
    """
    lo = np.concatenate([np.maximum(bounds.a_min, 0.0), np.zeros(n_surplus)])
    hi = np.concatenate(
        [np.minimum(bounds.a_max, cap), np.full(n_surplus, float(cap))]
    )
    if np.any(lo > hi):
        raise ValueError("feasible control box is empty; check bounds and cap")
    return lo, hi


def _check_nominal(u_nom: np.ndarray, v_nom: np.ndarray, mats: SystemMatrices):
    residual = np.abs(mats.B @ u_nom - v_nom).max()
    if residual > NOMINAL_TOL:
        raise ValueError(
            f"nominal control does not reproduce the nominal game (residual {residual:g})"
        )


@dataclass(frozen=True)
class FullInfoController:
    """Saturated feedback on the stacked-inverse coordinate z."""

    u_nom: np.ndarray
    du_min: np.ndarray
    du_max: np.ndarray
    mats: SystemMatrices

    # coordinate whose half squared norm certifies convergence
    lyapunov_coordinate = "z"

    def control(self, z: np.ndarray) -> np.ndarray:
        return self.u_nom + saturate(-z, self.du_min, self.du_max)

    def act(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.control(self.mats.z_from(x, y))


def make_full(
    u_nom: np.ndarray,
    v_nom: np.ndarray,
    bounds: AllocationBounds,
    v_grand_cap: float,
    mats: SystemMatrices,
    mode: str = "componentwise",
) -> FullInfoController:
    """Build the saturated controller with feasibility-guaranteeing thresholds.

    mode "componentwise" uses per-component slack to the feasible box;
    mode "scalar" collapses to the single conservative pair
    (max of the lower slacks, min of the upper slacks).
    """
    u_nom = np.asarray(u_nom, dtype=float)
    v_nom = np.asarray(v_nom, dtype=float)
    _check_nominal(u_nom, v_nom, mats)
    lo, hi = feasible_control_box(bounds, mats.m - 1, v_grand_cap)
    if np.any(u_nom < lo) or np.any(u_nom > hi):
        raise ValueError("nominal control lies outside the feasible box")
    du_min = lo - u_nom
    du_max = hi - u_nom
    if mode == "scalar":
        du_min = np.full_like(u_nom, du_min.max())
        du_max = np.full_like(u_nom, du_max.min())
    elif mode != "componentwise":
        raise ValueError(f"unknown threshold mode {mode!r}")
    return FullInfoController(u_nom=u_nom, du_min=du_min, du_max=du_max, mats=mats)


@dataclass(frozen=True)
class FeasibilityAudit:
    """Outcome of the delta-feasibility checks for the sign controller.

    row_sum_bound is max_i sum_j |B_dag[i,j]|; the conservative check asks
    delta * row_sum_bound to fit inside the nominal control's slack, the
    exhaustive check enumerates worst-case sign patterns (skipped above
    EXHAUSTIVE_AUDIT_MAX_M coalitions).
    """

    row_sum_bound: float
    conservative_ok: bool
    exhaustive_ok: bool | None

    @property
    def passed(self) -> bool:
        return self.conservative_ok and self.exhaustive_ok is not False


@dataclass(frozen=True)
class PartialInfoController:
    """Sign feedback u_nom - delta * B_dag @ sgn(x), clamped into the feasible box."""

    u_nom: np.ndarray
    delta: float
    mats: SystemMatrices
    u_lo: np.ndarray
    u_hi: np.ndarray
    audit: FeasibilityAudit

    lyapunov_coordinate = "x"

    def control(self, sgn_x: np.ndarray) -> np.ndarray:
        raw = self.u_nom - self.delta * (self.mats.B_dag @ sgn_x)
        return np.clip(raw, self.u_lo, self.u_hi)

    def act(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.control(sign_vector(x))


def make_partial(
    u_nom: np.ndarray,
    delta: float,
    v_nom: np.ndarray,
    bounds: AllocationBounds,
    v_grand_cap: float,
    mats: SystemMatrices,
) -> PartialInfoController:
    """Build the sign controller and audit whether clamping can ever engage."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    u_nom = np.asarray(u_nom, dtype=float)
    v_nom = np.asarray(v_nom, dtype=float)
    _check_nominal(u_nom, v_nom, mats)
    lo, hi = feasible_control_box(bounds, mats.m - 1, v_grand_cap)

    row_sum = mats.abs_row_sum_max()
    slack_lo = (u_nom - lo).min()
    slack_hi = (hi - u_nom).min()
    conservative_ok = delta * row_sum <= min(slack_lo, slack_hi) + NOMINAL_TOL

    exhaustive_ok: bool | None = None
    m = mats.m
    if m <= EXHAUSTIVE_AUDIT_MAX_M:
        # all sign patterns in {-1, 1}^m, one column per pattern
        bits = (np.arange(2**m)[None, :] >> np.arange(m)[:, None]) & 1
        signs = 2.0 * bits - 1.0
        candidates = u_nom[:, None] - delta * (mats.B_dag @ signs)
        exhaustive_ok = bool(
            np.all(candidates >= lo[:, None] - NOMINAL_TOL)
            and np.all(candidates <= hi[:, None] + NOMINAL_TOL)
        )

    audit = FeasibilityAudit(
        row_sum_bound=row_sum,
        conservative_ok=bool(conservative_ok),
        exhaustive_ok=exhaustive_ok,
    )
    return PartialInfoController(
        u_nom=u_nom, delta=float(delta), mats=mats, u_lo=lo, u_hi=hi, audit=audit
    )


def oracle_sign(
    eps: np.ndarray,
    s_tilde: np.ndarray,
    eps0: np.ndarray | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Ternary per-coalition answer: is the accumulated excess above the
    accumulated surplus handed out so far?

    The grand coalition has no surplus variable and compares against zero.
    Equals the sign of the deviation state when start and initial excess align.
    """
    eps = np.asarray(eps, dtype=float)
    m = eps.size
    threshold = np.concatenate([np.asarray(s_tilde, dtype=float), [0.0]])
    if threshold.size != m:
        raise ValueError("surplus accumulator must have one entry per proper coalition")
    shift = 0.0
    if eps0 is not None or x0 is not None:
        eps0 = np.zeros(m) if eps0 is None else np.asarray(eps0, dtype=float)
        x0 = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float)
        shift = eps0 - x0
    return sign_vector(eps - threshold - shift)


def discrete_approach_control(
    ctrl: PartialInfoController, x_k: np.ndarray, x_0: np.ndarray
) -> np.ndarray:
    """Running-deviation variant: sign feedback on x_k - x_0."""
    return ctrl.control(sign_vector(x_k - x_0))


@dataclass(frozen=True)
class DiscreteApproachController:
    """Wraps the sign controller for the discrete-time recursion."""

    inner: PartialInfoController

    @property
    def u_nom(self) -> np.ndarray:
        return self.inner.u_nom

    def act_discrete(self, x_k: np.ndarray, x_0: np.ndarray) -> np.ndarray:
        return discrete_approach_control(self.inner, x_k, x_0)


@dataclass(frozen=True)
class StationaryController:
    """Baseline that always hands out the nominal control."""

    u_nom: np.ndarray

    lyapunov_coordinate = "x"

    def control(self) -> np.ndarray:
        return self.u_nom

    def act(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.u_nom

    def act_discrete(self, x_k: np.ndarray, x_0: np.ndarray) -> np.ndarray:
        return self.u_nom


def stationary_control(u_nom: np.ndarray) -> StationaryController:
    return StationaryController(u_nom=np.asarray(u_nom, dtype=float))
