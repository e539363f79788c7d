"""Figure rendering for completed experiments.

Four PNGs per run, written next to the CSV: the normalized deviation trace of
the first two-player coalition, the average-allocation error, the Lyapunov
series, and the per-coalition excess rates.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import ExperimentConfig


def _mean_over_results(results, attr: str) -> np.ndarray:
    return np.mean([getattr(r, attr) for r in results], axis=0)


def render_figures(cfg: ExperimentConfig, results, out_dir: str) -> list[str]:
    paths = []
    times = results[0].times
    time_label = "t" if cfg.kind != "discrete-approach" else "k"

    # deviation ratio of the first two-player coalition, per pair plus mean
    comp = cfg.n if cfg.m > cfg.n else 0
    fig, ax = plt.subplots(figsize=(6, 4))
    for res in results:
        ax.plot(res.times, res.ratios[:, comp], color="0.7", lw=0.6)
    ax.plot(times, _mean_over_results(results, "ratios")[:, comp], color="C0", lw=1.8,
            label="mean over pairs")
    ax.axhline(0.0, color="k", lw=0.5, ls="--")
    ax.set_xlabel(time_label)
    ax.set_ylabel(f"(x_{comp + 1}({time_label}) - x_{comp + 1}(0)) / {time_label}")
    ax.set_title("Normalized deviation, first two-player coalition")
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, out_dir, "ratio.png"))

    # average allocation error
    abars = _mean_over_results(results, "abars")
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(cfg.n):
        err = np.where(times > 0, abars[:, i] - cfg.a_nom[i], 0.0)
        ax.plot(times, err, label=f"player {i + 1}")
    ax.axhline(0.0, color="k", lw=0.5, ls="--")
    ax.set_xlabel(time_label)
    ax.set_ylabel("average allocation - nominal")
    ax.set_title("Average allocation error")
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, out_dir, "allocation.png"))

    # Lyapunov value
    lyap = _mean_over_results(results, "lyap_series")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(times, np.maximum(lyap, 1e-16), color="C1")
    ax.set_xlabel(time_label)
    ax.set_ylabel("V")
    ax.set_title("Lyapunov value (mean over pairs)")
    paths.append(_save(fig, out_dir, "lyapunov.png"))

    # excess rates against the nominal surplus direction
    eps = _mean_over_results(results, "eps_series")
    fig, ax = plt.subplots(figsize=(6, 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(times[:, None] > 0, eps / np.where(times[:, None] > 0, times[:, None], 1.0), 0.0)
    for j in range(cfg.m):
        ax.plot(times, rates[:, j], lw=0.9, label=f"coalition {j + 1}")
    for j, s in enumerate(cfg.s_nom):
        ax.axhline(s, color="0.8", lw=0.5)
    ax.set_xlabel(time_label)
    ax.set_ylabel(f"excess / {time_label}")
    ax.set_title("Excess rates (grey: nominal surpluses)")
    ax.legend(loc="best", fontsize=7, ncol=2)
    paths.append(_save(fig, out_dir, "excess.png"))
    return paths


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
