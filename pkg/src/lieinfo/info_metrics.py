"""Entropy, relative entropy, Fisher information and entropy power of sampled densities.

All integrals reuse the density's own quadrature grid.  Logarithms and score
functions use a floor of ``1e-12 * max(f)``; how much mass sits below that
floor is reported alongside Fisher matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityError, DensityField, lie_derivatives

FLOOR = 1e-12
NEGATIVE_TOL = 1e-12
FLOOR_WARN_FRACTION = 0.01
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
ORTHOGONAL_TOL = 1e-10


class MetricError(ValueError):
    pass


def _weights_samples(f):
    w = np.asarray(f.weights, dtype=float).reshape(-1)
    p = np.asarray(f.samples, dtype=float).reshape(-1)
    if w.shape != p.shape:
        raise MetricError("weights and samples differ in length")
    return w, p


def _fsum(x) -> float:
    return math.fsum(np.asarray(x, dtype=float).reshape(-1))


def entropy(f) -> float:
    """-int f log f with 0 log 0 = 0.

    Accepts anything exposing ``weights`` and ``samples`` (fields, marginals).
    """
    w, p = _weights_samples(f)
    scale = max(1.0, float(np.max(np.abs(p)))) if p.size else 1.0
    if p.size and p.min() < -NEGATIVE_TOL * scale:
        raise MetricError(f"negative density value {p.min():.3e}")
    pos = p > 0
    return -_fsum(w[pos] * p[pos] * np.log(p[pos]))


def _floored(p, floor=FLOOR):
    cut = floor * float(np.max(p)) if p.size else 0.0
    return np.maximum(p, cut), p < cut


def _same_grid(f1, f2):
    if isinstance(f1, DensityField) and isinstance(f2, DensityField):
        if not f1.grid.same_as(f2.grid):
            raise MetricError("densities live on different grids")
    elif np.asarray(f1.samples).shape != np.asarray(f2.samples).shape:
        raise MetricError("densities have different sizes")


def kl_divergence(f1, f2, floor=FLOOR, support_tol=1e-8) -> float:
    """int f1 log(f1 / f2); f2 is floored at ``floor * max(f2)``."""
    _same_grid(f1, f2)
    w, p = _weights_samples(f1)
    _, q = _weights_samples(f2)
    qf, below = _floored(q, floor)
    pos = p > 0
    leak = _fsum(w[pos & below] * p[pos & below])
    if leak > support_tol:
        raise MetricError(f"{leak:.3e} of f1's mass lies where f2 is below the floor")
    return _fsum(w[pos] * p[pos] * (np.log(p[pos]) - np.log(qf[pos])))


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    side: str
    basis: str = "standard"
    floor_mass: float = 0.0
    warnings: tuple = field(default=())

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = m.shape[0]
        if m.shape != (n, n):
            raise MetricError("Fisher matrix must be square")
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
            raise MetricError("Fisher matrix is not symmetric")
        m = 0.5 * (m + m.T)
        if n and np.min(np.linalg.eigvalsh(m)) < -PSD_TOL * scale:
            raise MetricError("Fisher matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def weighted_trace(self, P) -> float:
        return float(np.trace(self.matrix @ np.asarray(P, dtype=float)))


def _scores(f: DensityField, side, method):
    derivs = lie_derivatives(f, side, method)
    p = f.samples
    pf, below = _floored(p)
    w = f.weights
    floor_mass = _fsum(w[below] * p[below])
    return derivs, pf, floor_mass


def fisher_matrix(f: DensityField, side="right", method="auto") -> FisherMatrix:
    """F_ij = int (X_i f)(X_j f) / f dg with right or left Lie derivatives."""
    derivs, pf, floor_mass = _scores(f, side, method)
    w = f.weights
    n = derivs.shape[0]
    F = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            F[i, j] = F[j, i] = _fsum(w * derivs[i] * derivs[j] / pf)
    warnings = []
    total = f.mass
    if total > 0 and floor_mass > FLOOR_WARN_FRACTION * total:
        warnings.append(f"floor active on {floor_mass / total:.2%} of the mass")
    return FisherMatrix(F, side, "standard", floor_mass, tuple(warnings))


def fisher_basis_change(F: FisherMatrix, A) -> FisherMatrix:
    """A F A^T for orthogonal A (derivatives along Y_i = sum_j A_ij X_j)."""
    A = np.asarray(A, dtype=float)
    n = F.matrix.shape[0]
    if A.shape != (n, n):
        raise MetricError(f"basis change must be {n}x{n}")
    if np.max(np.abs(A @ A.T - np.eye(n))) > ORTHOGONAL_TOL:
        raise MetricError("basis change is not orthogonal")
    return FisherMatrix(A @ F.matrix @ A.T, F.side, "rotated", F.floor_mass, F.warnings)


def _dimension(f) -> int:
    g = f.grid.group
    return g.dim


def entropy_power(f: DensityField, C=None) -> float:
    """N(f) = (C / 2 pi e) exp(2 S / n).

    By default C = 2 pi e on compact groups, so the uniform density has N = 1,
    and C = 1 otherwise, so a unit Gaussian on the line has N = 1.
    """
    n = _dimension(f)
    if C is None:
        C = 2 * math.pi * math.e if f.grid.group.compact else 1.0
    return C / (2 * math.pi * math.e) * math.exp(2.0 * entropy(f) / n)


def fisher_distance(f1: DensityField, f2: DensityField, side="right", method="auto") -> float:
    """int || X f1 / f1 - X f2 / f2 ||^2 f1 dg."""
    _same_grid(f1, f2)
    d1, p1, _ = _scores(f1, side, method)
    d2, p2, _ = _scores(f2, side, method)
    diff = d1 / p1 - d2 / p2
    return _fsum(f1.weights * f1.samples * np.sum(diff ** 2, axis=0))
