"""Symmetric-matrix helpers shared by the index model and the calipers."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from picse_match.errors import ConsistencyError


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def clamp_psd(m: np.ndarray, rtol: float = 1e-10, what: str = "matrix") -> np.ndarray:
    """Project a numerically PSD matrix onto the PSD cone.

    Eigenvalues below ``-rtol * trace`` indicate a genuinely indefinite
    input and raise; smaller negative values are clamped to zero.
    """
    m = symmetrize(m)
    if m.size == 0:
        return m
    vals, vecs = sla.eigh(m)
    scale = max(float(np.sum(np.abs(vals))), np.finfo(float).tiny)
    if vals[0] < -rtol * scale:
        raise ConsistencyError(f"{what} is not positive semidefinite (min eigenvalue {vals[0]:.3e})")
    if vals[0] >= 0:
        return m
    vals = np.maximum(vals, 0.0)
    return symmetrize((vecs * vals) @ vecs.T)


def sqrt_psd(m: np.ndarray) -> np.ndarray:
    vals, vecs = sla.eigh(symmetrize(m))
    root = np.sqrt(np.maximum(vals, 0.0))
    return symmetrize((vecs * root) @ vecs.T)


def op_norm(m: np.ndarray) -> float:
    vals = sla.eigvalsh(symmetrize(m))
    return float(max(abs(vals[0]), abs(vals[-1]))) if vals.size else 0.0


def fip(m: np.ndarray, n: np.ndarray) -> float:
    """Frobenius inner product tr(M'N) as a sum of elementwise products."""
    return float(np.sum(np.asarray(m) * np.asarray(n)))


def condition_number(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 1.0
    s = sla.svdvals(m)
    if s[-1] <= 0:
        return float("inf")
    return float(s[0] / s[-1])
