"""Stochastic game-value sources: finite-support generator and supply-chain game.

The finite-support generator follows the rejection loop: draw m candidate
points, solve for the weights reproducing the nominal game, accept only
nonnegative weights, rescale the points by the total weight, and re-check
box containment. Candidate points are drawn uniformly from the largest
hyperbox centered at the nominal game inside the value box; a full-box
uniform draw makes the total weight concentrate above 1 whenever the
nominal game sits near a corner, and the rescale step then never passes
containment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coalitions import CoalitionIndex, enumerate_coalitions, incidence_matrix

SOLVE_TOL = 1e-9
DEFAULT_MAX_TRIES = 100_000


class GenerationError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class GameBox:
    """Per-coalition value intervals."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("box bounds must be matching vectors")
        if np.any(lower > upper):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def m(self) -> int:
        return self.lower.size

    def contains(self, values: np.ndarray, tol: float = 0.0) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(
            np.all(values >= self.lower - tol) and np.all(values <= self.upper + tol)
        )

    def strictly_contains(self, values: np.ndarray) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(np.all(values > self.lower) and np.all(values < self.upper))


@dataclass(frozen=True)
class FiniteSupportProcess:
    """i.i.d. process over m support points with fixed weights.

    support[:, i] is the i-th point, drawn with probability weights[i];
    the weighted combination of the points equals the nominal game.
    """

    support: np.ndarray
    weights: np.ndarray
    box: GameBox
    attempts: int = field(default=0, compare=False)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        m = self.box.m
        if support.shape != (m, m) or weights.shape != (m,):
            raise ValueError("support must be m x m with one weight per column")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > SOLVE_TOL:
            raise ValueError("weights must form a probability vector")

    @property
    def mean(self) -> np.ndarray:
        return self.support @ self.weights


def generate_support(
    box: GameBox,
    v_nom: np.ndarray,
    rng: np.random.Generator,
    max_tries: int = DEFAULT_MAX_TRIES,
) -> FiniteSupportProcess:
    """Build a finite-support process with mean exactly v_nom, points in box."""
    v_nom = np.asarray(v_nom, dtype=float)
    if v_nom.shape != (box.m,):
        raise ValueError(f"nominal game must have {box.m} components")
    if not box.strictly_contains(v_nom):
        raise ValueError(
            "nominal game must lie strictly inside the value box; "
            "a boundary mean makes the rejection loop nonterminating"
        )
    m = box.m
    half = np.minimum(v_nom - box.lower, box.upper - v_nom)
    draw_lo = (v_nom - half)[:, None]
    draw_span = (2.0 * half)[:, None]
    for attempt in range(1, max_tries + 1):
        points = draw_lo + draw_span * rng.uniform(size=(m, m))
        try:
            weights = np.linalg.solve(points, v_nom)
        except np.linalg.LinAlgError:
            continue  # singular draw counts as a failed try
        total = weights.sum()
        if not (np.all(weights >= 0.0) and total > 0.0):
            continue
        rescaled = total * points
        columns_inside = np.all(rescaled >= box.lower[:, None]) and np.all(
            rescaled <= box.upper[:, None]
        )
        if not columns_inside:
            continue
        return FiniteSupportProcess(
            support=rescaled, weights=weights / total, box=box, attempts=attempt
        )
    raise GenerationError(
        f"no admissible support found in {max_tries} tries", attempts=max_tries
    )


def sample(proc: FiniteSupportProcess, rng: np.random.Generator) -> np.ndarray:
    """Draw one game vector: column i with probability weights[i]."""
    i = rng.choice(proc.weights.size, p=proc.weights)
    return proc.support[:, i].copy()


def sample_indices(
    proc: FiniteSupportProcess, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Draw `count` i.i.d. column indices; the bulk variant of sample()."""
    return rng.choice(proc.weights.size, size=count, p=proc.weights)


@dataclass(frozen=True)
class SupplyChainGame:
    """Joint-replenishment cost-sharing game.

    n retailers reorder from one warehouse; a coalition pays
    min(transport_cost, total demand) and its value is the saving over
    everyone reordering alone.
    """

    n: int
    transport_cost: float
    demand_min: np.ndarray
    demand_max: np.ndarray

    def __post_init__(self):
        d_min = np.asarray(self.demand_min, dtype=float)
        d_max = np.asarray(self.demand_max, dtype=float)
        object.__setattr__(self, "demand_min", d_min)
        object.__setattr__(self, "demand_max", d_max)
        if d_min.shape != (self.n,) or d_max.shape != (self.n,):
            raise ValueError("demand bounds must have one entry per retailer")
        if np.any(d_min < 0) or np.any(d_min > d_max):
            raise ValueError("demand bounds must satisfy 0 <= d_min <= d_max")
        if self.transport_cost <= 0:
            raise ValueError("transport cost must be positive")

    def index(self) -> CoalitionIndex:
        return enumerate_coalitions(self.n)


def supply_chain_values(game: SupplyChainGame, demand: np.ndarray) -> np.ndarray:
    """Cost savings of every coalition for one demand realization."""
    demand = np.asarray(demand, dtype=float)
    if np.any(demand < game.demand_min) or np.any(demand > game.demand_max):
        raise ValueError("demand outside its configured bounds")
    inc = incidence_matrix(game.index())
    solo_costs = np.minimum(game.transport_cost, demand)
    coalition_costs = np.minimum(game.transport_cost, inc @ demand)
    return inc @ solo_costs - coalition_costs


def supply_chain_bounds(game: SupplyChainGame) -> GameBox:
    """Per-coalition interval [0, upper] containing every realizable value."""
    inc = incidence_matrix(game.index())
    solo_caps = np.minimum(game.transport_cost, game.demand_max)
    floor_costs = np.minimum(game.transport_cost, inc @ game.demand_min)
    upper = inc @ solo_caps - floor_costs
    return GameBox(lower=np.zeros(upper.size), upper=upper)
