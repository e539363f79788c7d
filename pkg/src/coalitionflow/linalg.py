"""Matrix machinery: right pseudo-inverse, completion pair, saturation, sign."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .coalitions import CoalitionIndex, augmented_matrix, enumerate_coalitions, incidence_matrix

IDENTITY_TOL = 1e-9
MAX_CONDITION = 1e12


def right_pseudo_inverse(mat: np.ndarray) -> np.ndarray:
    """Moore-Penrose right inverse M^T (M M^T)^-1 of a full-row-rank matrix."""
    mat = np.asarray(mat, dtype=float)
    singular = np.linalg.svd(mat, compute_uv=False)
    if singular[-1] == 0.0 or singular[0] / singular[-1] > MAX_CONDITION:
        raise np.linalg.LinAlgError(
            f"matrix is rank deficient (condition number above {MAX_CONDITION:g})"
        )
    gram = mat @ mat.T
    return np.linalg.solve(gram, mat).T


def complete(mat: np.ndarray, right_inv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Completion pair (C, F) making [mat; C] and [right_inv F] mutual inverses.

    F is an orthonormal basis of the null space of mat and C = F^T, which
    forces C @ right_inv = 0 and C @ F = I.
    """
    mat = np.asarray(mat, dtype=float)
    rows, cols = mat.shape
    residual = np.abs(mat @ right_inv - np.eye(rows)).max()
    if residual > IDENTITY_TOL:
        raise ValueError(f"right_inv is not a right inverse (residual {residual:g})")
    basis = scipy.linalg.null_space(mat)
    expected = cols - rows
    if basis.shape[1] != expected:
        raise np.linalg.LinAlgError(
            f"null space has dimension {basis.shape[1]}, expected {expected}"
        )
    return basis.T, basis


def saturate(xi: np.ndarray, lo, hi) -> np.ndarray:
    """Componentwise clamp of xi into [lo, hi]."""
    xi = np.asarray(xi, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("saturation bounds must satisfy lo <= hi")
    return np.clip(xi, lo, hi)


def sign_vector(x: np.ndarray) -> np.ndarray:
    """Componentwise sign with sgn(0) = 0; negative zero maps to plain zero."""
    return np.sign(np.asarray(x, dtype=float)) + 0.0


@dataclass(frozen=True)
class SystemMatrices:
    """Incidence/augmented matrices with the right inverse and completion pair."""

    index: CoalitionIndex
    incidence: np.ndarray
    B: np.ndarray
    B_dag: np.ndarray
    C: np.ndarray
    F: np.ndarray

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def m(self) -> int:
        return self.index.m

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def z_from(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Recover the stacked-inverse coordinate z from the pair (x, y)."""
        return self.B_dag @ x + self.F @ y

    def abs_row_sum_max(self) -> float:
        """max_i sum_j |B_dag[i, j]|, the conservative feasibility constant."""
        return float(np.abs(self.B_dag).sum(axis=1).max())

    def residuals(self) -> dict[str, float]:
        """Max-norm residuals of the defining identities."""
        m = self.m
        dim = self.control_dim
        stacked = np.vstack([self.B, self.C])
        inverse = np.hstack([self.B_dag, self.F])
        return {
            "right_inverse": float(np.abs(self.B @ self.B_dag - np.eye(m)).max()),
            "completion": float(np.abs(stacked @ inverse - np.eye(dim)).max()),
            "null_space": float(np.abs(self.B @ self.F).max()) if self.F.size else 0.0,
            "orthogonality": float(np.abs(self.C @ self.B_dag).max()) if self.C.size else 0.0,
        }

    def validate(self, tol: float = IDENTITY_TOL) -> None:
        for name, value in self.residuals().items():
            if value > tol:
                raise ValueError(f"system matrices violate {name} identity ({value:g})")

    @classmethod
    def for_players(cls, n: int) -> "SystemMatrices":
        index = enumerate_coalitions(n)
        inc = incidence_matrix(index)
        B = augmented_matrix(inc)
        B_dag = right_pseudo_inverse(B)
        C, F = complete(B, B_dag)
        mats = cls(index=index, incidence=inc, B=B, B_dag=B_dag, C=C, F=F)
        mats.validate()
        return mats
