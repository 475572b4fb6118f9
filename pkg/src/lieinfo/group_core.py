"""Matrix group arithmetic, charts, exponential coordinates and Jacobians.

Supported groups are SO(3), SE(2), the Heisenberg group H(1), SL(2,R) and
the one-dimensional backends (R,+) and SO(2).  Elements are stored as real
matrices; ``R1`` uses the unipotent embedding ``[[1, x], [0, 1]]`` and
``SO2`` the 2x2 rotation matrix.

Jacobian convention: the i-th column of ``J_r`` is ``vee(g^-1 dg/dq_i)`` and
the i-th column of ``J_l`` is ``vee(dg/dq_i g^-1)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-4
CUT_LOCUS_MARGIN = 1e-8
REPAIR_TOL = 1e-9
FATAL_TOL = 1e-6


class GroupError(ValueError):
    """Raised on group-tag mismatches or elements that left the manifold."""


class ChartDomainError(ValueError):
    """Raised when a chart point or logarithm is outside the valid domain."""


class GroupId(enum.Enum):
    SO3 = "SO3"
    SE2 = "SE2"
    H1 = "H1"
    SL2R = "SL2R"
    R1 = "R1"
    SO2 = "SO2"

    @property
    def dim(self) -> int:
        return 1 if self in (GroupId.R1, GroupId.SO2) else 3

    @property
    def compact(self) -> bool:
        return self in (GroupId.SO3, GroupId.SO2)

    @property
    def matrix_size(self) -> int:
        return 3 if self in (GroupId.SO3, GroupId.SE2, GroupId.H1) else 2


class ChartId(enum.Enum):
    EulerZXZ = "EulerZXZ"
    AxisAngleExp = "AxisAngleExp"
    CartesianTheta = "CartesianTheta"
    ExpCoords = "ExpCoords"
    AlphaBetaGamma = "AlphaBetaGamma"
    Iwasawa = "Iwasawa"
    Line = "Line"
    Angle = "Angle"


CHART_GROUPS = {
    ChartId.EulerZXZ: {GroupId.SO3},
    ChartId.AxisAngleExp: {GroupId.SO3},
    ChartId.CartesianTheta: {GroupId.SE2},
    ChartId.ExpCoords: {GroupId.SE2, GroupId.H1},
    ChartId.AlphaBetaGamma: {GroupId.H1},
    ChartId.Iwasawa: {GroupId.SL2R},
    ChartId.Line: {GroupId.R1},
    ChartId.Angle: {GroupId.SO2},
}

DEFAULT_CHART = {
    GroupId.SO3: ChartId.EulerZXZ,
    GroupId.SE2: ChartId.CartesianTheta,
    GroupId.H1: ChartId.AlphaBetaGamma,
    GroupId.SL2R: ChartId.Iwasawa,
    GroupId.R1: ChartId.Line,
    GroupId.SO2: ChartId.Angle,
}

# Haar normalisation: SO(3) and SO(2) have total mass one, the rest are left
# unnormalised (|det J| itself).
HAAR_NORMALIZATION = {
    GroupId.SO3: 1.0 / (8.0 * math.pi ** 2),
    GroupId.SO2: 1.0 / (2.0 * math.pi),
    GroupId.SE2: 1.0,
    GroupId.H1: 1.0,
    GroupId.SL2R: 1.0,
    GroupId.R1: 1.0,
}


def as_group(group) -> GroupId:
    return group if isinstance(group, GroupId) else GroupId(group)


def as_chart(chart) -> ChartId:
    return chart if isinstance(chart, ChartId) else ChartId(chart)


def check_chart(group: GroupId, chart: ChartId) -> None:
    if group not in CHART_GROUPS[chart]:
        raise GroupError(f"chart {chart.value} is not admissible for {group.value}")


# ---------------------------------------------------------------------------
# Lie algebra bases, hat/vee and structure constants


def _e(i, j, n=3):
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


BASIS = {
    GroupId.SO3: np.array([
        [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
        [[0, 0, 1], [0, 0, 0], [-1, 0, 0]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 0]],
    ], dtype=float),
    GroupId.SE2: np.array([_e(0, 2), _e(1, 2), _e(1, 0) - _e(0, 1)]),
    GroupId.H1: np.array([_e(0, 1), _e(0, 2), _e(1, 2)]),
    GroupId.SL2R: np.array([
        [[0, -1], [1, 0]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
    ], dtype=float),
    GroupId.R1: np.array([[[0, 1], [0, 0]]], dtype=float),
    GroupId.SO2: np.array([[[0, -1], [1, 0]]], dtype=float),
}


def _structure_table(entries, n=3):
    c = np.zeros((n, n, n))
    for (i, j, k), v in entries.items():
        c[i, j, k] = v
        c[j, i, k] = -v
    return c


# C[i, j, k]: [X_i, X_j] = sum_k C[i, j, k] X_k
STRUCTURE_CONSTANTS = {
    GroupId.SO3: _structure_table({(0, 1, 2): 1.0, (1, 2, 0): 1.0, (2, 0, 1): 1.0}),
    GroupId.SE2: _structure_table({(0, 2, 1): -1.0, (1, 2, 0): 1.0}),
    GroupId.H1: _structure_table({(0, 2, 1): 1.0}),
    GroupId.SL2R: _structure_table({(0, 1, 2): 2.0, (0, 2, 1): -2.0, (1, 2, 0): -2.0}),
    GroupId.R1: np.zeros((1, 1, 1)),
    GroupId.SO2: np.zeros((1, 1, 1)),
}


def hat(group, x) -> np.ndarray:
    """Algebra matrix sum_i x_i X_i (batched over leading axes of x)."""
    group = as_group(group)
    x = np.asarray(x, dtype=float)
    return np.tensordot(x, BASIS[group], axes=([-1], [0]))


def vee(group, X) -> np.ndarray:
    """Coefficient vector of an algebra matrix (batched)."""
    group = as_group(group)
    X = np.asarray(X, dtype=float)
    if group is GroupId.SO3:
        return np.stack([X[..., 2, 1], X[..., 0, 2], X[..., 1, 0]], axis=-1)
    if group is GroupId.SE2:
        return np.stack([X[..., 0, 2], X[..., 1, 2], X[..., 1, 0]], axis=-1)
    if group is GroupId.H1:
        return np.stack([X[..., 0, 1], X[..., 0, 2], X[..., 1, 2]], axis=-1)
    if group is GroupId.SL2R:
        return np.stack([0.5 * (X[..., 1, 0] - X[..., 0, 1]),
                         0.5 * (X[..., 0, 0] - X[..., 1, 1]),
                         0.5 * (X[..., 1, 0] + X[..., 0, 1])], axis=-1)
    if group is GroupId.R1:
        return X[..., 0, 1][..., None]
    return X[..., 1, 0][..., None]


def bracket(group, x, y) -> np.ndarray:
    X, Y = hat(group, x), hat(group, y)
    return vee(group, X @ Y - Y @ X)


def ad_matrix(group, x) -> np.ndarray:
    """Matrix of ad_X in the basis, i.e. ad_X y = A y."""
    group = as_group(group)
    c = STRUCTURE_CONSTANTS[group]
    return np.einsum("i,ijk->kj", np.asarray(x, dtype=float), c)


@dataclass(frozen=True)
class AlgebraVector:
    group: GroupId
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "group", as_group(self.group))
        x = np.array(self.x, dtype=float).reshape(-1)
        if x.shape[0] != self.group.dim:
            raise GroupError(f"{self.group.value} algebra vectors have {self.group.dim} entries")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def matrix(self) -> np.ndarray:
        return hat(self.group, self.x)


# ---------------------------------------------------------------------------
# Elements


def _invariant_residual(group: GroupId, m: np.ndarray) -> float:
    if group is GroupId.SO3:
        return max(np.abs(m @ m.T - np.eye(3)).max(), abs(np.linalg.det(m) - 1.0))
    if group is GroupId.SE2:
        r = m[:2, :2]
        return max(np.abs(r @ r.T - np.eye(2)).max(), abs(np.linalg.det(r) - 1.0),
                   np.abs(m[2] - [0.0, 0.0, 1.0]).max())
    if group is GroupId.H1:
        return max(np.abs(np.diag(m) - 1.0).max(), np.abs(np.tril(m, -1)).max())
    if group is GroupId.SL2R:
        return abs(np.linalg.det(m) - 1.0)
    if group is GroupId.R1:
        return max(abs(m[0, 0] - 1), abs(m[1, 1] - 1), abs(m[1, 0]))
    r = m
    return max(np.abs(r @ r.T - np.eye(2)).max(), abs(np.linalg.det(r) - 1.0))


def _polar(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


def _repair(group: GroupId, m: np.ndarray) -> np.ndarray:
    m = m.copy()
    if group is GroupId.SO3 or group is GroupId.SO2:
        return _polar(m)
    if group is GroupId.SE2:
        m[:2, :2] = _polar(m[:2, :2])
        m[2] = [0.0, 0.0, 1.0]
        return m
    if group is GroupId.H1:
        m = np.triu(m)
        np.fill_diagonal(m, 1.0)
        return m
    if group is GroupId.SL2R:
        return m / math.sqrt(np.linalg.det(m))
    return np.array([[1.0, m[0, 1]], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: GroupId
    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "group", as_group(self.group))
        m = np.array(self.mat, dtype=float)
        k = self.group.matrix_size
        if m.shape != (k, k):
            raise GroupError(f"{self.group.value} elements are {k}x{k} matrices, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    def residual(self) -> float:
        return float(_invariant_residual(self.group, self.mat))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    def __repr__(self):
        return f"GroupElement({self.group.value}, {self.mat.tolist()})"


def identity(group) -> GroupElement:
    group = as_group(group)
    return GroupElement(group, np.eye(group.matrix_size))


def _checked(group: GroupId, m: np.ndarray) -> GroupElement:
    res = _invariant_residual(group, m)
    if res > FATAL_TOL:
        raise GroupError(f"{group.value} invariant drift {res:.3e} exceeds {FATAL_TOL}")
    if res > REPAIR_TOL:
        m = _repair(group, m)
    return GroupElement(group, m)


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    if g1.group is not g2.group:
        raise GroupError(f"cannot compose {g1.group.value} with {g2.group.value}")
    return _checked(g1.group, g1.mat @ g2.mat)


def inverse(g: GroupElement) -> GroupElement:
    group, m = g.group, g.mat
    if group in (GroupId.SO3, GroupId.SO2):
        inv = m.T.copy()
    elif group is GroupId.SE2:
        inv = np.eye(3)
        inv[:2, :2] = m[:2, :2].T
        inv[:2, 2] = -m[:2, :2].T @ m[:2, 2]
    elif group is GroupId.H1:
        a, b, c = m[0, 1], m[0, 2], m[1, 2]
        inv = np.array([[1.0, -a, a * c - b], [0.0, 1.0, -c], [0.0, 0.0, 1.0]])
    elif group is GroupId.SL2R:
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    else:
        inv = np.array([[1.0, -m[0, 1]], [0.0, 1.0]])
    return _checked(group, inv)


def inverse_matrices(group, mats: np.ndarray) -> np.ndarray:
    """Batched inverse of element matrices (no invariant checks)."""
    group = as_group(group)
    if group in (GroupId.SO3, GroupId.SO2):
        return np.swapaxes(mats, -1, -2)
    if group is GroupId.SE2:
        out = np.zeros_like(mats)
        rt = np.swapaxes(mats[..., :2, :2], -1, -2)
        out[..., :2, :2] = rt
        out[..., :2, 2] = -np.einsum("...ij,...j->...i", rt, mats[..., :2, 2])
        out[..., 2, 2] = 1.0
        return out
    if group is GroupId.H1:
        a, b, c = mats[..., 0, 1], mats[..., 0, 2], mats[..., 1, 2]
        out = np.zeros_like(mats)
        out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
        out[..., 0, 1] = -a
        out[..., 0, 2] = a * c - b
        out[..., 1, 2] = -c
        return out
    if group is GroupId.SL2R:
        out = np.empty_like(mats)
        out[..., 0, 0] = mats[..., 1, 1]
        out[..., 1, 1] = mats[..., 0, 0]
        out[..., 0, 1] = -mats[..., 0, 1]
        out[..., 1, 0] = -mats[..., 1, 0]
        return out
    out = mats.copy()
    out[..., 0, 1] = -mats[..., 0, 1]
    return out


# ---------------------------------------------------------------------------
# Elementary rotations


def rot3(angle):
    """Batched rotation about axis 3."""
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                     np.stack([z, z, o], -1)], -2)


def rot1(angle):
    """Batched rotation about axis 1."""
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1),
                     np.stack([z, s, c], -1)], -2)


def euler_zxz_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return rot3(q[..., 0]) @ rot1(q[..., 1]) @ rot3(q[..., 2])


def euler_zxz_angles(R) -> np.ndarray:
    """ZXZ angles (alpha, beta, gamma) with alpha, gamma in [0, 2pi), beta in [0, pi].

    At the poles (sin beta below 1e-12) gamma is set to zero.
    """
    R = np.asarray(R, dtype=float)
    beta = np.arccos(np.clip(R[..., 2, 2], -1.0, 1.0))
    sb = np.hypot(R[..., 0, 2], R[..., 1, 2])
    regular = sb > 1e-12
    alpha = np.where(regular, np.arctan2(R[..., 0, 2], -R[..., 1, 2]), 0.0)
    gamma = np.where(regular, np.arctan2(R[..., 2, 0], R[..., 2, 1]), 0.0)
    # pole: R = R3(alpha) R1(0 or pi) R3(0)
    pole_alpha = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    alpha = np.where(regular, alpha, pole_alpha)
    # use the stable atan2 form for beta
    beta = np.arctan2(sb, R[..., 2, 2])
    two_pi = 2.0 * math.pi
    return np.stack([np.mod(alpha, two_pi), beta, np.mod(gamma, two_pi)], axis=-1)


# ---------------------------------------------------------------------------
# Small-angle helper functions (series below SMALL_ANGLE)


def _sinc(t):
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    t2 = t * t
    return np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(ts) / ts)


def _cosc(t):
    """(1 - cos t) / t^2."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    t2 = t * t
    return np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(ts)) / ts ** 2)


def _sinc3(t):
    """(t - sin t) / t^3."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    t2 = t * t
    return np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                    (ts - np.sin(ts)) / ts ** 3)


# ---------------------------------------------------------------------------
# Exponential and logarithm


def _so3_exp(x):
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    X = hat(GroupId.SO3, x)
    eye = np.broadcast_to(np.eye(3), X.shape)
    return eye + _sinc(th)[..., None, None] * X + _cosc(th)[..., None, None] * (X @ X)


def _se2_exp(x):
    x = np.asarray(x, dtype=float)
    x1, x2, t = x[..., 0], x[..., 1], x[..., 2]
    a, b = _sinc(t), t * _cosc(t)  # sin t / t, (1 - cos t) / t
    c, s = np.cos(t), np.sin(t)
    out = np.zeros(x.shape[:-1] + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 0, 2] = a * x1 - b * x2
    out[..., 1, 2] = b * x1 + a * x2
    out[..., 2, 2] = 1.0
    return out


def _h1_exp(x):
    x = np.asarray(x, dtype=float)
    return _h1_matrix(np.stack([x[..., 0], x[..., 1] + 0.5 * x[..., 0] * x[..., 2], x[..., 2]], -1))


def _h1_matrix(q):
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
    out[..., 0, 1] = q[..., 0]
    out[..., 0, 2] = q[..., 1]
    out[..., 1, 2] = q[..., 2]
    return out


def _sl2_exp(x):
    # Cayley-Hamilton: X^2 = -det(X) I for traceless X
    X = hat(GroupId.SL2R, x)
    d = -np.linalg.det(X)
    r = np.sqrt(np.abs(d))
    pos = d >= 0
    rs = np.where(r < SMALL_ANGLE, 1.0, r)
    small = r < SMALL_ANGLE
    cosh_like = np.where(pos, np.cosh(r), np.cos(r))
    sinh_like = np.where(small, 1.0 + np.where(pos, 1.0, -1.0) * r * r / 6.0,
                         np.where(pos, np.sinh(rs), np.sin(rs)) / rs)
    eye = np.broadcast_to(np.eye(2), X.shape)
    return cosh_like[..., None, None] * eye + sinh_like[..., None, None] * X


def exp_map(group, x) -> GroupElement:
    """exp(sum_i x_i X_i) as a group element."""
    if isinstance(x, AlgebraVector):
        group, x = x.group, x.x
    group = as_group(group)
    return GroupElement(group, exp_matrices(group, np.asarray(x, dtype=float).reshape(group.dim)))


def exp_matrices(group, x) -> np.ndarray:
    group = as_group(group)
    x = np.asarray(x, dtype=float)
    if group is GroupId.SO3:
        return _so3_exp(x)
    if group is GroupId.SE2:
        return _se2_exp(x)
    if group is GroupId.H1:
        return _h1_exp(x)
    if group is GroupId.SL2R:
        return _sl2_exp(x)
    if group is GroupId.R1:
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 1.0
        out[..., 0, 1] = x[..., 0]
        return out
    c, s = np.cos(x[..., 0]), np.sin(x[..., 0])
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rotation_angle(R) -> np.ndarray:
    """theta(R) = arccos((tr R - 1) / 2), computed stably."""
    R = np.asarray(R, dtype=float)
    cos_t = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    skew = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0],
                           R[..., 1, 0] - R[..., 0, 1]], -1)
    return np.arctan2(np.linalg.norm(skew, axis=-1), cos_t)


def _so3_log(R, allow_cut=False):
    R = np.asarray(R, dtype=float)
    th = float(rotation_angle(R))
    if th >= math.pi - CUT_LOCUS_MARGIN:
        if not allow_cut:
            raise ChartDomainError(f"SO3 log undefined on cut locus: rotation angle {th!r}")
        # axis from the symmetric part R + I = 2 n n^T at theta = pi
        s = R + np.eye(3)
        k = int(np.argmax(np.diag(s)))
        n = s[:, k] / math.sqrt(s[k, k])
        return math.pi * n / np.linalg.norm(n)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    return w / float(_sinc(th))


def _se2_log(m):
    t = math.atan2(m[1, 0], m[0, 0])
    if abs(t) >= math.pi - CUT_LOCUS_MARGIN:
        raise ChartDomainError(f"SE2 log undefined on cut locus: rotation angle {t!r}")
    a, b = float(_sinc(t)), t * float(_cosc(t))
    v = np.array([[a, -b], [b, a]])
    xy = np.linalg.solve(v, m[:2, 2])
    return np.array([xy[0], xy[1], t])


def _sl2_log(m):
    tr = m[0, 0] + m[1, 1]
    half = 0.5 * tr
    if half <= -1.0 + 1e-12:
        raise ChartDomainError(f"SL2R element with trace {tr!r} has no real logarithm")
    if half >= 1.0:
        r = math.acosh(half)
        f = 1.0 - r * r / 6.0 if r < SMALL_ANGLE else r / math.sinh(r)
    else:
        r = math.acos(half)
        f = 1.0 + r * r / 6.0 if r < SMALL_ANGLE else r / math.sin(r)
    X = f * (m - half * np.eye(2))
    return vee(GroupId.SL2R, X)


def log_map(g: GroupElement) -> AlgebraVector:
    group, m = g.group, g.mat
    if group is GroupId.SO3:
        x = _so3_log(m)
    elif group is GroupId.SE2:
        x = _se2_log(m)
    elif group is GroupId.H1:
        a, b, c = m[0, 1], m[0, 2], m[1, 2]
        x = np.array([a, b - 0.5 * a * c, c])
    elif group is GroupId.SL2R:
        x = _sl2_log(m)
    elif group is GroupId.R1:
        x = np.array([m[0, 1]])
    else:
        t = math.atan2(m[1, 0], m[0, 0])
        if abs(t) >= math.pi - CUT_LOCUS_MARGIN:
            raise ChartDomainError(f"SO2 log undefined on cut locus: angle {t!r}")
        x = np.array([t])
    return AlgebraVector(group, x)


# ---------------------------------------------------------------------------
# Charts


def chart_matrices(group, chart, q) -> np.ndarray:
    """Element matrices for (batched) chart points."""
    group, chart = as_group(group), as_chart(chart)
    check_chart(group, chart)
    q = np.asarray(q, dtype=float)
    if chart is ChartId.EulerZXZ:
        return euler_zxz_matrix(q)
    if chart in (ChartId.AxisAngleExp, ChartId.ExpCoords, ChartId.Line, ChartId.Angle):
        return exp_matrices(group, q)
    if chart is ChartId.CartesianTheta:
        c, s = np.cos(q[..., 2]), np.sin(q[..., 2])
        out = np.zeros(q.shape[:-1] + (3, 3))
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
        out[..., 0, 2] = q[..., 0]
        out[..., 1, 2] = q[..., 1]
        out[..., 2, 2] = 1.0
        return out
    if chart is ChartId.AlphaBetaGamma:
        return _h1_matrix(q)
    # Iwasawa: g = K(theta) A(t) N(xi)
    th, t, xi = q[..., 0], q[..., 1], q[..., 2]
    c, s = np.cos(th), np.sin(th)
    et, emt = np.exp(t), np.exp(-t)
    an = np.zeros(q.shape[:-1] + (2, 2))
    an[..., 0, 0] = et
    an[..., 0, 1] = et * xi
    an[..., 1, 1] = emt
    k = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return k @ an


def chart_coords(group, chart, mats, allow_cut=False) -> np.ndarray:
    """Chart coordinates of (batched) element matrices."""
    group, chart = as_group(group), as_chart(chart)
    check_chart(group, chart)
    mats = np.asarray(mats, dtype=float)
    if chart is ChartId.EulerZXZ:
        return euler_zxz_angles(mats)
    if chart is ChartId.CartesianTheta:
        th = np.arctan2(mats[..., 1, 0], mats[..., 0, 0])
        return np.stack([mats[..., 0, 2], mats[..., 1, 2], th], -1)
    if chart is ChartId.AlphaBetaGamma:
        return np.stack([mats[..., 0, 1], mats[..., 0, 2], mats[..., 1, 2]], -1)
    if chart is ChartId.Line:
        return mats[..., 0, 1][..., None]
    if chart is ChartId.Angle:
        return np.arctan2(mats[..., 1, 0], mats[..., 0, 0])[..., None]
    if chart is ChartId.Iwasawa:
        a, c = mats[..., 0, 0], mats[..., 1, 0]
        th = np.arctan2(c, a)
        et = np.hypot(a, c)
        cs, sn = np.cos(th), np.sin(th)
        b = cs * mats[..., 0, 1] + sn * mats[..., 1, 1]
        return np.stack([th, np.log(et), b / et], -1)
    # exponential charts: element by element
    flat = mats.reshape((-1,) + mats.shape[-2:])
    if group is GroupId.SO3:
        out = [_so3_log(m, allow_cut=allow_cut) for m in flat]
    else:
        out = [log_map(GroupElement(group, m)).x for m in flat]
    return np.asarray(out).reshape(mats.shape[:-2] + (group.dim,))


def chart_to_element(group, chart, q) -> GroupElement:
    group = as_group(group)
    return GroupElement(group, chart_matrices(group, chart, np.asarray(q, dtype=float)))


def element_to_chart(g: GroupElement, chart=None) -> np.ndarray:
    chart = DEFAULT_CHART[g.group] if chart is None else as_chart(chart)
    return chart_coords(g.group, chart, g.mat)


# ---------------------------------------------------------------------------
# Jacobians


def _stack_cols(cols):
    return np.stack(cols, axis=-1)


def _jac_euler(q, side):
    a, b, g = q[..., 0], q[..., 1], q[..., 2]
    z, o = np.zeros_like(a), np.ones_like(a)
    if side == "left":
        return _stack_cols([np.stack([z, z, o], -1),
                            np.stack([np.cos(a), np.sin(a), z], -1),
                            np.stack([np.sin(a) * np.sin(b), -np.cos(a) * np.sin(b), np.cos(b)], -1)])
    return _stack_cols([np.stack([np.sin(b) * np.sin(g), np.sin(b) * np.cos(g), np.cos(b)], -1),
                        np.stack([np.cos(g), -np.sin(g), z], -1),
                        np.stack([z, z, o], -1)])


def _jac_so3_exp(x, side):
    th = np.linalg.norm(x, axis=-1)
    X = hat(GroupId.SO3, x)
    sgn = 1.0 if side == "left" else -1.0
    eye = np.broadcast_to(np.eye(3), X.shape)
    return eye + sgn * _cosc(th)[..., None, None] * X + _sinc3(th)[..., None, None] * (X @ X)


def _jac_se2_exp(x, side):
    if side == "right":
        x = -x
    x1, x2, t = x[..., 0], x[..., 1], x[..., 2]
    a = _sinc(t)                 # sin t / t
    b = t * _cosc(t)             # (1 - cos t) / t
    c = _cosc(t)                 # (1 - cos t) / t^2
    d = t * _sinc3(t)            # (t - sin t) / t^2
    out = np.zeros(x.shape[:-1] + (3, 3))
    out[..., 0, 0] = a
    out[..., 0, 1] = -b
    out[..., 1, 0] = b
    out[..., 1, 1] = a
    out[..., 0, 2] = c * x2 + d * x1
    out[..., 1, 2] = -c * x1 + d * x2
    out[..., 2, 2] = 1.0
    return out


def _jac_cartesian(q, side):
    x, y, t = q[..., 0], q[..., 1], q[..., 2]
    out = np.zeros(q.shape[:-1] + (3, 3))
    out[..., 2, 2] = 1.0
    if side == "left":
        out[..., 0, 0] = out[..., 1, 1] = 1.0
        out[..., 0, 2] = y
        out[..., 1, 2] = -x
    else:
        c, s = np.cos(t), np.sin(t)
        out[..., 0, 0] = c
        out[..., 0, 1] = s
        out[..., 1, 0] = -s
        out[..., 1, 1] = c
    return out


def _jac_h1(q, side, chart):
    out = np.zeros(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
    if chart is ChartId.AlphaBetaGamma:
        if side == "left":
            out[..., 1, 0] = -q[..., 2]
        else:
            out[..., 1, 2] = -q[..., 0]
    else:
        sgn = 1.0 if side == "left" else -1.0
        out[..., 1, 0] = -sgn * 0.5 * q[..., 2]
        out[..., 1, 2] = sgn * 0.5 * q[..., 0]
    return out


def _jac_iwasawa(q, side):
    th, t, xi = q[..., 0], q[..., 1], q[..., 2]
    e2, em2 = np.exp(2 * t), np.exp(-2 * t)
    z, o = np.zeros_like(th), np.ones_like(th)
    if side == "left":
        c2, s2 = np.cos(2 * th), np.sin(2 * th)
        return _stack_cols([np.stack([o, z, z], -1),
                            np.stack([z, c2, s2], -1),
                            np.stack([-0.5 * e2, -0.5 * e2 * s2, 0.5 * e2 * c2], -1)])
    return _stack_cols([
        np.stack([0.5 * (em2 + e2 * (1 + xi * xi)), -xi * e2, 0.5 * (e2 - em2 - xi * xi * e2)], -1),
        np.stack([-xi, o, xi], -1),
        np.stack([-0.5 * o, z, 0.5 * o], -1)])


def jacobian(group, chart, q, side="right") -> np.ndarray:
    """Closed-form left or right Jacobian at (batched) chart points."""
    group, chart = as_group(group), as_chart(chart)
    check_chart(group, chart)
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != group.dim:
        raise ChartDomainError(f"{chart.value} points have {group.dim} coordinates")
    if chart is ChartId.EulerZXZ:
        return _jac_euler(q, side)
    if chart is ChartId.AxisAngleExp:
        return _jac_so3_exp(q, side)
    if chart is ChartId.CartesianTheta:
        return _jac_cartesian(q, side)
    if chart is ChartId.ExpCoords and group is GroupId.SE2:
        return _jac_se2_exp(q, side)
    if chart in (ChartId.ExpCoords, ChartId.AlphaBetaGamma):
        return _jac_h1(q, side, chart)
    if chart is ChartId.Iwasawa:
        return _jac_iwasawa(q, side)
    return np.ones(q.shape[:-1] + (1, 1))


def numerical_jacobian(group, chart, q, side="right", step=1e-6) -> np.ndarray:
    """Central-difference Jacobian straight from the definition (test oracle)."""
    group, chart = as_group(group), as_chart(chart)
    q = np.asarray(q, dtype=float)
    g = chart_matrices(group, chart, q)
    ginv = inverse_matrices(group, g)
    cols = []
    for i in range(group.dim):
        dq = np.zeros(group.dim)
        dq[i] = step
        dg = (chart_matrices(group, chart, q + dq) - chart_matrices(group, chart, q - dq)) / (2 * step)
        cols.append(vee(group, ginv @ dg if side == "right" else dg @ ginv))
    return np.stack(cols, axis=-1)


def is_singular(chart, q) -> bool:
    chart = as_chart(chart)
    q = np.asarray(q, dtype=float)
    if chart is ChartId.EulerZXZ:
        return abs(math.sin(q[1])) < 1e-12
    if chart is ChartId.AxisAngleExp:
        th = np.linalg.norm(q)
        return th > math.pi or abs(2 * math.pi - th) < 1e-12 or (th > 0 and abs(math.sin(th / 2)) < 1e-12)
    return False


def haar_density(group, chart, q, with_flag=False):
    """|det J(q)| times the group normalisation; 0 (flagged) on singular points."""
    group, chart = as_group(group), as_chart(chart)
    q = np.asarray(q, dtype=float)
    singular = is_singular(chart, q)
    val = 0.0 if singular else float(abs(np.linalg.det(jacobian(group, chart, q, "left"))))
    val *= HAAR_NORMALIZATION[group]
    return (val, singular) if with_flag else val


def haar_density_grid(group, chart, q) -> np.ndarray:
    """Vectorised |det J| * normalisation (no singularity flagging)."""
    group, chart = as_group(group), as_chart(chart)
    return np.abs(np.linalg.det(jacobian(group, chart, q, "left"))) * HAAR_NORMALIZATION[group]


# ---------------------------------------------------------------------------
# Adjoint


def _regular_chart_point(g: GroupElement):
    group = g.group
    if group is GroupId.SO3:
        q = euler_zxz_angles(g.mat)
        if math.sin(q[1]) > 1e-6:
            return ChartId.EulerZXZ, q
        return ChartId.AxisAngleExp, _so3_log(g.mat, allow_cut=True)
    chart = DEFAULT_CHART[group]
    return chart, chart_coords(group, chart, g.mat)


def adjoint(g: GroupElement) -> np.ndarray:
    """Ad(g) = J_l J_r^-1 at a regular chart point of g."""
    chart, q = _regular_chart_point(g)
    jl = jacobian(g.group, chart, q, "left")
    jr = jacobian(g.group, chart, q, "right")
    return np.linalg.solve(jr.T, jl.T).T


def adjoint_direct(g: GroupElement) -> np.ndarray:
    """Ad(g) from conjugation, column i = vee(g X_i g^-1) (test oracle)."""
    ginv = inverse_matrices(g.group, g.mat)
    return np.stack([vee(g.group, g.mat @ X @ ginv) for X in BASIS[g.group]], axis=-1)


def modular_function(g: GroupElement) -> float:
    return float(np.linalg.det(adjoint(g)))


def random_element(group, rng: np.random.Generator, scale=1.0) -> GroupElement:
    """Random element: Haar-uniform on SO3/SO2, exp of a scaled Gaussian otherwise."""
    group = as_group(group)
    if group is GroupId.SO3:
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        m = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        return GroupElement(group, m)
    if group is GroupId.SO2:
        return exp_map(group, [rng.uniform(-math.pi, math.pi)])
    return exp_map(group, scale * rng.normal(size=group.dim))
