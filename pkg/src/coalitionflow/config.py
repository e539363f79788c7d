"""Experiment configuration: flat key-value text with dotted section names.

Example:

    game.n = 3
    game.v_nom = [1, 2, 3, 4, 5, 6, 10]
    control.kind = full
    sim.dt = 0.05

Unknown keys are errors, and validation reports every violation at once,
each prefixed with the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coalitions import AllocationBounds
from .linalg import SystemMatrices
from .sources import GameBox

NOMINAL_TOL = 1e-9

CONTROLLER_KINDS = ("full", "partial", "discrete-approach", "stationary")
THRESHOLD_MODES = ("scalar", "componentwise")


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))


# key -> (kind, required); kind in {"int", "float", "bool", "str", "vector"}
SCHEMA: dict[str, tuple[str, bool]] = {
    "game.n": ("int", True),
    "game.v_nom": ("vector", True),
    "game.box_lower": ("vector", True),
    "game.box_upper": ("vector", True),
    "game.a_min": ("vector", False),
    "game.a_max": ("vector", False),
    "control.kind": ("str", True),
    "control.u_nom": ("vector", False),
    "control.a_nom": ("vector", False),
    "control.delta": ("float", False),
    "control.threshold_mode": ("str", False),
    "control.v_cap": ("float", False),
    "sim.dt": ("float", True),
    "sim.steps": ("int", True),
    "sim.trials": ("int", False),
    "sim.pairs": ("int", False),
    "sim.seed": ("int", True),
    "sim.x0": ("vector", False),
    "sim.epsilon0": ("vector", False),
    "sim.y0": ("vector", False),
    "output.dir": ("str", False),
    "output.stride": ("int", False),
    "output.plots": ("bool", False),
}


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    v_nom: np.ndarray
    box: GameBox
    bounds: AllocationBounds
    kind: str
    u_nom: np.ndarray
    delta: float
    threshold_mode: str
    v_cap: float
    dt: float
    steps: int
    trials: int
    pairs: int
    seed: int
    x0: np.ndarray
    epsilon0: np.ndarray
    y0: np.ndarray
    out_dir: str
    stride: int
    plots: bool

    @property
    def m(self) -> int:
        return 2**self.n - 1

    @property
    def a_nom(self) -> np.ndarray:
        return self.u_nom[: self.n]

    @property
    def s_nom(self) -> np.ndarray:
        return self.u_nom[self.n :]


def _parse_scalar(token: str):
    low = token.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def parse_text(text: str) -> tuple[dict, list[str]]:
    """Parse raw config text into {key: value}; returns (values, violations)."""
    values: dict = {}
    violations: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key in values:
            violations.append(f"{key}: duplicate key (line {lineno})")
            continue
        if rhs.startswith("["):
            if not rhs.endswith("]"):
                violations.append(f"{key}: unterminated array literal")
                continue
            items = [s.strip() for s in rhs[1:-1].split(",") if s.strip()]
            try:
                values[key] = np.array([float(s) for s in items], dtype=float)
            except ValueError:
                violations.append(f"{key}: array entries must be numbers")
        else:
            values[key] = _parse_scalar(rhs)
    return values, violations


def _coerce(key: str, kind: str, value, violations: list[str]):
    if kind == "vector":
        if isinstance(value, np.ndarray):
            return value
        violations.append(f"{key}: expected an array literal like [1, 2, 3]")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            violations.append(f"{key}: expected an integer, got {value!r}")
        else:
            return value
    elif kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        violations.append(f"{key}: expected a number, got {value!r}")
    elif kind == "bool":
        if isinstance(value, bool):
            return value
        violations.append(f"{key}: expected true or false, got {value!r}")
    elif kind == "str":
        if isinstance(value, str):
            return value
        violations.append(f"{key}: expected a bare token, got {value!r}")
    return None


def validate_config(text: str) -> ExperimentConfig:
    """Parse and cross-check a config, collecting every violation."""
    values, violations = parse_text(text)

    for key in values:
        if key not in SCHEMA:
            violations.append(f"{key}: unknown key")
    typed: dict = {}
    for key, (kind, required) in SCHEMA.items():
        if key in values:
            coerced = _coerce(key, kind, values[key], violations)
            if coerced is not None:
                typed[key] = coerced
        elif required:
            violations.append(f"{key}: missing required key")
    if violations:
        raise ConfigError(violations)

    n = typed["game.n"]
    if n < 1 or n > 12:
        violations.append(f"game.n: must be in [1, 12], got {n}")
        raise ConfigError(violations)
    m = 2**n - 1

    v_nom = typed["game.v_nom"]
    if v_nom.size != m:
        violations.append(
            f"game.v_nom: needs {m} components (2^{n} - 1) but has {v_nom.size}"
        )

    box = None
    box_lower, box_upper = typed["game.box_lower"], typed["game.box_upper"]
    if box_lower.size != m or box_upper.size != m:
        violations.append(
            f"game.box_lower/game.box_upper: need {m} components, "
            f"have {box_lower.size} and {box_upper.size}"
        )
    else:
        try:
            box = GameBox(lower=box_lower, upper=box_upper)
        except ValueError as exc:
            violations.append(f"game.box_lower/game.box_upper: {exc}")
    if box is not None and v_nom.size == m and not box.strictly_contains(v_nom):
        violations.append("game.v_nom: must lie strictly inside the value box")

    v_grand = float(v_nom[-1]) if v_nom.size == m else float("nan")
    a_min = typed.get("game.a_min", np.zeros(n))
    a_max = typed.get("game.a_max", np.full(n, v_grand))
    bounds = None
    if a_min.size != n or a_max.size != n:
        violations.append(f"game.a_min/game.a_max: need {n} components")
    else:
        try:
            bounds = AllocationBounds(a_min=a_min, a_max=a_max)
        except ValueError as exc:
            violations.append(f"game.a_min/game.a_max: {exc}")

    kind = typed["control.kind"]
    if kind not in CONTROLLER_KINDS:
        violations.append(
            f"control.kind: must be one of {', '.join(CONTROLLER_KINDS)}, got {kind!r}"
        )

    mode = typed.get("control.threshold_mode", "componentwise")
    if mode not in THRESHOLD_MODES:
        violations.append(
            f"control.threshold_mode: must be one of {', '.join(THRESHOLD_MODES)}"
        )

    delta = typed.get("control.delta", 1.0)
    if delta <= 0:
        violations.append(f"control.delta: must be positive, got {delta}")

    u_nom = None
    has_u = "control.u_nom" in typed
    has_a = "control.a_nom" in typed
    if has_u == has_a:
        violations.append(
            "control.u_nom: exactly one of control.u_nom or control.a_nom is required"
        )
    elif v_nom.size == m:
        mats = SystemMatrices.for_players(n)
        if has_u:
            u_nom = typed["control.u_nom"]
            if u_nom.size != n + m - 1:
                violations.append(
                    f"control.u_nom: needs {n + m - 1} components (n + m - 1) "
                    f"but has {u_nom.size}"
                )
                u_nom = None
        else:
            a_nom = typed["control.a_nom"]
            if a_nom.size != n:
                violations.append(f"control.a_nom: needs {n} components")
            else:
                s_nom = (mats.incidence @ a_nom - v_nom)[:-1]
                if np.any(s_nom < -NOMINAL_TOL):
                    violations.append(
                        "control.a_nom: derived surplus is negative; "
                        "a_nom is not a core allocation of v_nom"
                    )
                else:
                    u_nom = np.concatenate([a_nom, np.maximum(s_nom, 0.0)])
        if u_nom is not None:
            residual = float(np.abs(mats.B @ u_nom - v_nom).max())
            if residual > NOMINAL_TOL:
                violations.append(
                    f"control.u_nom: B @ u_nom deviates from v_nom by {residual:g}"
                )
            if np.any(u_nom[n:] < 0):
                violations.append("control.u_nom: surplus components must be nonnegative")
            if bounds is not None and (
                np.any(u_nom[:n] < bounds.a_min) or np.any(u_nom[:n] > bounds.a_max)
            ):
                violations.append("control.u_nom: allocation part outside its bounds")

    v_cap = typed.get("control.v_cap", v_grand)
    if not np.isfinite(v_cap) or v_cap <= 0:
        violations.append(f"control.v_cap: must be positive and finite, got {v_cap}")

    dt = typed["sim.dt"]
    if dt <= 0:
        violations.append(f"sim.dt: must be positive, got {dt}")
    steps = typed["sim.steps"]
    if steps < 1:
        violations.append(f"sim.steps: must be >= 1, got {steps}")
    trials = typed.get("sim.trials", 1)
    if trials < 1:
        violations.append(f"sim.trials: must be >= 1, got {trials}")
    pairs = typed.get("sim.pairs", 10)
    if pairs < 1:
        violations.append(f"sim.pairs: must be >= 1, got {pairs}")
    stride = typed.get("output.stride", 100)
    if stride < 1:
        violations.append(f"output.stride: must be >= 1, got {stride}")

    x0 = typed.get("sim.x0", np.zeros(m))
    eps0 = typed.get("sim.epsilon0", np.zeros(m))
    y0 = typed.get("sim.y0", np.zeros(n - 1))
    for key, vec, size in (
        ("sim.x0", x0, m),
        ("sim.epsilon0", eps0, m),
        ("sim.y0", y0, n - 1),
    ):
        if vec.size != size:
            violations.append(f"{key}: needs {size} components, has {vec.size}")

    if violations:
        raise ConfigError(violations)

    return ExperimentConfig(
        n=n,
        v_nom=v_nom,
        box=box,
        bounds=bounds,
        kind=kind,
        u_nom=u_nom,
        delta=float(delta),
        threshold_mode=mode,
        v_cap=float(v_cap),
        dt=float(dt),
        steps=steps,
        trials=trials,
        pairs=pairs,
        seed=typed["sim.seed"],
        x0=x0,
        epsilon0=eps0,
        y0=y0,
        out_dir=typed.get("output.dir", "out"),
        stride=stride,
        plots=typed.get("output.plots", True),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())
