"""Coalition enumeration, incidence matrices, excess bookkeeping and core predicates.

Players are numbered 1..n. A coalition is a bitmask over those players
(bit i-1 set means player i belongs). The canonical ordering is
size-then-lexicographic with the grand coalition last, e.g. for n=3:
{1},{2},{3},{1,2},{1,3},{2,3},{1,2,3}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

MAX_PLAYERS = 12

FEASIBILITY_TOL = 1e-9


class BalancednessError(RuntimeError):
    """LP solver could not decide feasibility of the core system."""


@dataclass(frozen=True)
class CoalitionIndex:
    """Canonical ordering of the 2^n - 1 nonempty coalitions."""

    n: int
    masks: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.masks)

    def members(self, position: int) -> tuple[int, ...]:
        """Players of the coalition at a given position, 1-based."""
        mask = self.masks[position]
        return tuple(i + 1 for i in range(self.n) if mask >> i & 1)

    def label(self, position: int) -> str:
        return "{" + ",".join(str(i) for i in self.members(position)) + "}"


def enumerate_coalitions(n: int) -> CoalitionIndex:
    """Enumerate all nonempty coalitions of n players in canonical order."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError(f"player count must be an integer, got {n!r}")
    if n < 1 or n > MAX_PLAYERS:
        raise ValueError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
    subsets = []
    for size in range(1, n + 1):
        for combo in itertools.combinations(range(1, n + 1), size):
            mask = 0
            for i in combo:
                mask |= 1 << (i - 1)
            subsets.append((size, combo, mask))
    subsets.sort(key=lambda item: (item[0], item[1]))
    return CoalitionIndex(n=n, masks=tuple(mask for _, _, mask in subsets))


def incidence_matrix(index: CoalitionIndex) -> np.ndarray:
    """m x n matrix whose row j is the 0/1 membership vector of coalition j."""
    out = np.zeros((index.m, index.n))
    for j, mask in enumerate(index.masks):
        for i in range(index.n):
            if mask >> i & 1:
                out[j, i] = 1.0
    return out


def augmented_matrix(incidence: np.ndarray) -> np.ndarray:
    """Extend the incidence matrix with -I surplus columns for proper coalitions.

    The grand-coalition row gets a zero surplus entry, so that for
    u = [a; s] the product equals incidence @ a - [s; 0].
    """
    m = incidence.shape[0]
    surplus_block = np.vstack([-np.eye(m - 1), np.zeros((1, m - 1))])
    return np.hstack([incidence, surplus_block])


@dataclass(frozen=True)
class AllocationBounds:
    """Per-player box constraining the instantaneous allocation."""

    a_min: np.ndarray
    a_max: np.ndarray

    def __post_init__(self):
        a_min = np.asarray(self.a_min, dtype=float)
        a_max = np.asarray(self.a_max, dtype=float)
        object.__setattr__(self, "a_min", a_min)
        object.__setattr__(self, "a_max", a_max)
        if a_min.shape != a_max.shape:
            raise ValueError("allocation bounds must have matching shapes")
        if np.any(a_min > a_max):
            raise ValueError("allocation lower bound exceeds upper bound")


@dataclass(frozen=True)
class ExcessState:
    """Accumulated extra reward per coalition, plus its initial value."""

    epsilon: np.ndarray
    epsilon0: np.ndarray

    @classmethod
    def initial(cls, epsilon0: np.ndarray) -> "ExcessState":
        eps0 = np.asarray(epsilon0, dtype=float)
        return cls(epsilon=eps0.copy(), epsilon0=eps0)


def excess_update(
    state: ExcessState,
    incidence: np.ndarray,
    allocation: np.ndarray,
    values: np.ndarray,
    dt: float,
) -> ExcessState:
    """Advance the excess one explicit-Euler step of the reward-minus-value flow."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    flow = incidence @ allocation - values
    if not np.all(np.isfinite(flow)):
        raise ValueError("non-finite excess flow; check allocation and values")
    return ExcessState(epsilon=state.epsilon + dt * flow, epsilon0=state.epsilon0)


def core_membership(
    values: np.ndarray,
    allocation: np.ndarray,
    tol: float,
    incidence: np.ndarray,
) -> bool:
    """True iff the allocation is efficient and coalitionally rational within tol."""
    if tol < 0:
        raise ValueError(f"tolerance must be nonnegative, got {tol}")
    values = np.asarray(values, dtype=float)
    totals = incidence @ allocation
    if abs(totals[-1] - values[-1]) > tol:
        return False
    return bool(np.all(totals[:-1] >= values[:-1] - tol))


def core_violation(
    values: np.ndarray,
    allocation: np.ndarray,
    incidence: np.ndarray,
) -> float:
    """Max-norm residual of the core system; zero iff membership at tol = 0."""
    values = np.asarray(values, dtype=float)
    totals = incidence @ allocation
    efficiency_gap = abs(totals[-1] - values[-1])
    shortfalls = np.maximum(0.0, values[:-1] - totals[:-1])
    worst_shortfall = float(shortfalls.max()) if shortfalls.size else 0.0
    return max(float(efficiency_gap), worst_shortfall)


def is_balanced(values: np.ndarray, incidence: np.ndarray) -> bool:
    """Decide whether the core of the game is nonempty.

    Solves the linear feasibility system {sum(a) = v_N, incidence @ a >= v}
    with a zero objective. A solver failure raises rather than silently
    reporting an empty core.
    """
    values = np.asarray(values, dtype=float)
    m, n = incidence.shape
    if n == 1:
        return True  # a = v_N always works for a single player
    res = linprog(
        c=np.zeros(n),
        A_ub=-incidence[:-1],
        b_ub=-values[:-1],
        A_eq=np.ones((1, n)),
        b_eq=values[-1:],
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise BalancednessError(
        f"feasibility solve did not converge (status {res.status}: {res.message})"
    )
