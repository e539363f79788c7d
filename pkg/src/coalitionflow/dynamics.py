"""Time-stepped integration of the deviation flow and its discrete recursion.

Continuous runs use explicit Euler at fixed dt; the sign feedback makes the
right-hand side discontinuous, so trajectories chatter near zero and summary
statistics average over windows rather than reading single points.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .coalitions import ExcessState, excess_update
from .controllers import oracle_sign
from .linalg import SystemMatrices, sign_vector
from .sources import FiniteSupportProcess, sample_indices

FEASIBILITY_SLACK = 1e-9


class FeasibilityError(RuntimeError):
    """A controller emitted a control outside the feasible set."""


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible stream for one (purpose, pair, trial) key."""
    return np.random.default_rng([int(seed), *map(int, key)])


class KahanSum:
    """Compensated accumulator; keeps 1e5-step running integrals accurate."""

    def __init__(self, size: int):
        self.total = np.zeros(size)
        self._comp = np.zeros(size)

    def add(self, term: np.ndarray) -> None:
        adjusted = term - self._comp
        fresh = self.total + adjusted
        self._comp = (fresh - self.total) - adjusted
        self.total = fresh


@dataclass(frozen=True)
class FlowState:
    """Deviation state x, augmentation state y, and elapsed time."""

    x: np.ndarray
    y: np.ndarray
    t: float
    x0: np.ndarray


@dataclass(frozen=True)
class SimConfig:
    dt: float
    steps: int
    seed: int
    trials: int = 1
    epsilon0: np.ndarray | None = None
    x0: np.ndarray | None = None
    y0: np.ndarray | None = None
    stride: int = 100

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True)
class FlowDynamics:
    """Flow integrator bound to one game: matrices, nominal control, feasible box."""

    mats: SystemMatrices
    u_nom: np.ndarray
    u_lo: np.ndarray | None = None
    u_hi: np.ndarray | None = None

    @property
    def v_nom(self) -> np.ndarray:
        return self.mats.B @ self.u_nom

    def check_feasible(self, u: np.ndarray) -> None:
        if self.u_lo is not None and np.any(u < self.u_lo - FEASIBILITY_SLACK):
            raise FeasibilityError("control below the feasible box")
        if self.u_hi is not None and np.any(u > self.u_hi + FEASIBILITY_SLACK):
            raise FeasibilityError("control above the feasible box")
        if u.size > self.mats.n and np.any(u[self.mats.n :] < -FEASIBILITY_SLACK):
            raise FeasibilityError("negative surplus component")

    def step(self, state: FlowState, u: np.ndarray, v: np.ndarray, dt: float) -> FlowState:
        """One explicit-Euler step of the pair (x, y)."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.check_feasible(u)
        du = u - self.u_nom
        x_next = state.x + dt * (self.mats.B @ u - v)
        y_next = state.y + dt * (self.mats.C @ du)
        return replace(state, x=x_next, y=y_next, t=state.t + dt)

    def step_discrete(
        self, x_k: np.ndarray, u_k: np.ndarray, v_k: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Unit-step recursion on deviations; returns (x_{k+1}, y_{k+1} = x_{k+1} - x_k)."""
        self.check_feasible(u_k)
        increment = self.mats.B @ (u_k - self.u_nom) - (v_k - self.v_nom)
        return x_k + increment, increment


@dataclass
class TrajectoryRecord:
    """Decimated series plus full-resolution diagnostic scalars for one run.

    Series rows are taken every `stride` steps starting at t = 0; the final
    state lives in the summary fields. ratios is (x - x0) / t with the t = 0
    row defined as 0.
    """

    dt: float
    steps: int
    stride: int
    times: np.ndarray
    xs: np.ndarray
    ratios: np.ndarray
    zs: np.ndarray
    eps_series: np.ndarray
    abars: np.ndarray
    vbars: np.ndarray
    ubars: np.ndarray
    lyap_series: np.ndarray
    lyap_full: np.ndarray
    xtxdot_full: np.ndarray
    xnorm1_full: np.ndarray
    xdot_full: np.ndarray | None
    x0: np.ndarray
    x_final: np.ndarray
    y_final: np.ndarray
    eps0: np.ndarray
    eps_final: np.ndarray
    int_a: np.ndarray
    int_v: np.ndarray
    int_u: np.ndarray
    t_final: float
    oracle_mismatches: int = 0
    x_full: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def abar_final(self) -> np.ndarray:
        return self.int_a / self.t_final

    @property
    def vbar_final(self) -> np.ndarray:
        return self.int_v / self.t_final

    @property
    def ubar_final(self) -> np.ndarray:
        return self.int_u / self.t_final

    @property
    def ratio_final(self) -> np.ndarray:
        return (self.x_final - self.x0) / self.t_final

    def drop_bulk(self) -> None:
        """Free full-resolution arrays once diagnostics are computed."""
        self.xdot_full = None
        self.x_full = None


def _resolve(vec: np.ndarray | None, size: int) -> np.ndarray:
    if vec is None:
        return np.zeros(size)
    out = np.asarray(vec, dtype=float)
    if out.shape != (size,):
        raise ValueError(f"expected vector of length {size}, got shape {out.shape}")
    return out.copy()


def run_trajectory(
    cfg: SimConfig,
    controller,
    source: FiniteSupportProcess,
    dyn: FlowDynamics,
    rng: np.random.Generator | None = None,
    check_oracle: bool = False,
    keep_xdot: bool = True,
) -> TrajectoryRecord:
    """Simulate one continuous-time run: sample, control, integrate, accumulate."""
    mats = dyn.mats
    n, m = mats.n, mats.m
    rng = rng if rng is not None else trial_rng(cfg.seed)

    x = _resolve(cfg.x0, m)
    y = _resolve(cfg.y0, n - 1)
    x0 = x.copy()
    eps = ExcessState.initial(_resolve(cfg.epsilon0, m))
    int_u = KahanSum(mats.control_dim)
    int_v = KahanSum(m)

    steps, dt, stride = cfg.steps, cfg.dt, cfg.stride
    n_rows = -(-steps // stride)  # ceil
    times = np.empty(n_rows)
    xs = np.empty((n_rows, m))
    ratios = np.empty((n_rows, m))
    zs = np.empty((n_rows, mats.control_dim))
    eps_series = np.empty((n_rows, m))
    abars = np.empty((n_rows, n))
    vbars = np.empty((n_rows, m))
    ubars = np.empty((n_rows, mats.control_dim))
    lyap_series = np.empty(n_rows)
    lyap_full = np.empty(steps + 1)
    xtxdot_full = np.empty(steps)
    xnorm1_full = np.empty(steps)
    xdot_full = np.empty((steps, m)) if keep_xdot else None

    idx = sample_indices(source, rng, steps)
    # track the coordinate the controller certifies: z for the saturated
    # full-observation rule, x for sign feedback and the stationary baseline
    lyap_on_z = getattr(controller, "lyapunov_coordinate", "x") == "z"
    z = mats.z_from(x, y)
    w = z if lyap_on_z else x
    lyap_full[0] = 0.5 * float(w @ w)
    mismatches = 0
    row = 0
    for k in range(steps):
        t = k * dt
        if k % stride == 0:
            times[row] = t
            xs[row] = x
            ratios[row] = (x - x0) / t if k > 0 else 0.0
            zs[row] = z
            eps_series[row] = eps.epsilon
            if k > 0:
                abars[row] = int_u.total[:n] / t
                vbars[row] = int_v.total / t
                ubars[row] = int_u.total / t
            else:
                abars[row] = 0.0
                vbars[row] = 0.0
                ubars[row] = 0.0
            lyap_series[row] = lyap_full[k]
            row += 1

        v = source.support[:, idx[k]]
        u = controller.act(x, y)
        dyn.check_feasible(u)
        du = u - dyn.u_nom
        xdot = mats.B @ u - v
        xtxdot_full[k] = float(x @ xdot)
        xnorm1_full[k] = float(np.abs(x).sum())
        if xdot_full is not None:
            xdot_full[k] = xdot

        x = x + dt * xdot
        y = y + dt * (mats.C @ du)
        eps = excess_update(eps, mats.incidence, u[:n], v, dt)
        int_u.add(dt * u)
        int_v.add(dt * v)

        z = mats.z_from(x, y)
        w = z if lyap_on_z else x
        lyap_full[k + 1] = 0.5 * float(w @ w)
        if check_oracle:
            predicted = oracle_sign(eps.epsilon, int_u.total[n:], eps.epsilon0, x0)
            if not np.array_equal(predicted, sign_vector(x)):
                mismatches += 1
        if not np.isfinite(lyap_full[k + 1]):
            raise FloatingPointError(f"non-finite state at step {k + 1}")

    return TrajectoryRecord(
        dt=dt,
        steps=steps,
        stride=stride,
        times=times,
        xs=xs,
        ratios=ratios,
        zs=zs,
        eps_series=eps_series,
        abars=abars,
        vbars=vbars,
        ubars=ubars,
        lyap_series=lyap_series,
        lyap_full=lyap_full,
        xtxdot_full=xtxdot_full,
        xnorm1_full=xnorm1_full,
        xdot_full=xdot_full,
        x0=x0,
        x_final=x,
        y_final=y,
        eps0=eps.epsilon0,
        eps_final=eps.epsilon,
        int_a=int_u.total[:n].copy(),
        int_v=int_v.total.copy(),
        int_u=int_u.total.copy(),
        t_final=steps * dt,
        oracle_mismatches=mismatches,
    )


def run_discrete(
    cfg: SimConfig,
    controller,
    source: FiniteSupportProcess,
    dyn: FlowDynamics,
    rng: np.random.Generator | None = None,
) -> TrajectoryRecord:
    """Simulate the unit-step deviation recursion, keeping the whole x path."""
    mats = dyn.mats
    n, m = mats.n, mats.m
    rng = rng if rng is not None else trial_rng(cfg.seed)

    x = _resolve(cfg.x0, m)
    x0 = x.copy()
    eps = ExcessState.initial(_resolve(cfg.epsilon0, m))
    int_u = KahanSum(mats.control_dim)
    int_v = KahanSum(m)

    steps, stride = cfg.steps, cfg.stride
    n_rows = -(-steps // stride)
    times = np.empty(n_rows)
    xs = np.empty((n_rows, m))
    ratios = np.empty((n_rows, m))
    eps_series = np.empty((n_rows, m))
    abars = np.empty((n_rows, n))
    vbars = np.empty((n_rows, m))
    ubars = np.empty((n_rows, mats.control_dim))
    lyap_series = np.empty(n_rows)
    lyap_full = np.empty(steps + 1)
    xtxdot_full = np.empty(steps)
    xnorm1_full = np.empty(steps)
    x_full = np.empty((steps + 1, m))
    x_full[0] = x
    lyap_full[0] = 0.5 * float(x @ x)

    idx = sample_indices(source, rng, steps)
    row = 0
    for k in range(steps):
        if k % stride == 0:
            times[row] = float(k)
            xs[row] = x
            ratios[row] = (x - x0) / k if k > 0 else 0.0
            eps_series[row] = eps.epsilon
            if k > 0:
                abars[row] = int_u.total[:n] / k
                vbars[row] = int_v.total / k
                ubars[row] = int_u.total / k
            else:
                abars[row] = 0.0
                vbars[row] = 0.0
                ubars[row] = 0.0
            lyap_series[row] = lyap_full[k]
            row += 1

        v = source.support[:, idx[k]]
        u = controller.act_discrete(x, x0)
        x_next, increment = dyn.step_discrete(x, u, v)
        xtxdot_full[k] = float(x @ increment)
        xnorm1_full[k] = float(np.abs(x).sum())
        eps = excess_update(eps, mats.incidence, u[:n], v, 1.0)
        int_u.add(u)
        int_v.add(v)
        x = x_next
        x_full[k + 1] = x
        lyap_full[k + 1] = 0.5 * float(x @ x)
        if not np.isfinite(lyap_full[k + 1]):
            raise FloatingPointError(f"non-finite state at step {k + 1}")

    return TrajectoryRecord(
        dt=1.0,
        steps=steps,
        stride=stride,
        times=times,
        xs=xs,
        ratios=ratios,
        zs=np.zeros((n_rows, 0)),
        eps_series=eps_series,
        abars=abars,
        vbars=vbars,
        ubars=ubars,
        lyap_series=lyap_series,
        lyap_full=lyap_full,
        xtxdot_full=xtxdot_full,
        xnorm1_full=xnorm1_full,
        xdot_full=None,
        x0=x0,
        x_final=x,
        y_final=np.zeros(n - 1),
        eps0=eps.epsilon0,
        eps_final=eps.epsilon,
        int_a=int_u.total[:n].copy(),
        int_v=int_v.total.copy(),
        int_u=int_u.total.copy(),
        t_final=float(steps),
        x_full=x_full,
    )
