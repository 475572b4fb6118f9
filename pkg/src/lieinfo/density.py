"""Sampled probability densities on quadrature grids.

A :class:`DensityField` pairs a grid with nonnegative samples.  Evaluation
off the grid is multilinear in chart coordinates (periodic wrap on angular
axes).  On SO(3) the beta axis is padded with mirrored ghost nodes using
``f(a, -b, c) = f(a + pi, b, c + pi)``, and a ``"spectral"`` method evaluates
the band-limited interpolant exactly.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import harmonic_so3 as hs
from .group_core import (ChartId, GroupElement, GroupId, as_group, chart_coords, chart_matrices,
                         euler_zxz_angles, euler_zxz_matrix, hat, inverse_matrices, jacobian,
                         random_element, rot1, rot3)
from .quadrature import (COS_LEGENDRE, LEGENDRE, PERIODIC, Grid, GridError, ProductGroup,
                         build_grid, check_truncation, grid_from_descriptor, integrate)

NORMALIZE_TOL = 1e-8
FLAG_TOL = 1e-8
NEGATIVE_TOL = 1e-12
MASS_ESCAPE_TOL = 5e-3
_BINARY_MAGIC = b"LIDF"


class DensityError(ValueError):
    pass


class MassEscapeError(DensityError):
    """Convolution mass left the truncation box."""


class DomainError(DensityError):
    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: Grid
    samples: np.ndarray
    flags: frozenset = field(default=frozenset())

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1)
        if s.shape[0] != self.grid.size:
            raise DensityError(f"grid has {self.grid.size} nodes, got {s.shape[0]} samples")
        if not np.all(np.isfinite(s)):
            raise DensityError("samples must be finite")
        scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
        if s.size and s.min() < -NEGATIVE_TOL * scale:
            raise DensityError(f"negative sample {s.min():.3e}")
        s = np.maximum(s, 0.0)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def group(self):
        return self.grid.group

    @property
    def weights(self):
        return self.grid.weights

    @property
    def mass(self) -> float:
        return integrate(self.grid, self.samples)

    def array(self) -> np.ndarray:
        return self.samples.reshape(self.grid.shape)

    @functools.cached_property
    def spectrum(self):
        """Band-limited transform at the grid's full capacity (SO3 only)."""
        return hs.fourier_samples(self.grid, self.samples, self.grid.bandwidth_capacity)

    def with_samples(self, samples, flags=frozenset()) -> "DensityField":
        return DensityField(self.grid, samples, flags)

    def is_normalized(self, tol=NORMALIZE_TOL) -> bool:
        return abs(self.mass - 1.0) <= tol


@dataclass(frozen=True)
class Marginal:
    """Lower-dimensional density: samples with quadrature weights summing to one."""
    name: str
    axes: tuple
    weights: np.ndarray
    samples: np.ndarray

    @property
    def mass(self):
        return math.fsum(self.weights * self.samples)


@dataclass(frozen=True)
class DecompositionSpec:
    kind: str
    subgroup: str = "gamma"

    KINDS = ("direct_product", "coset_GH", "double_coset_KGH", "nested_GKH")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DensityError(f"unknown decomposition {self.kind!r}")


def is_so3(grid: Grid) -> bool:
    return grid.group is GroupId.SO3 and grid.chart is ChartId.EulerZXZ


def uniform(grid: Grid) -> DensityField:
    vol = grid.volume
    return DensityField(grid, np.full(grid.size, 1.0 / vol), {"symmetric", "class_function"})


def normalize(f: DensityField) -> DensityField:
    m = f.mass
    if not (math.isfinite(m) and m > 0):
        raise DensityError(f"cannot normalize a field of mass {m}")
    return DensityField(f.grid, f.samples / m, f.flags)


def from_samples(grid: Grid, samples, normalize_mass=True) -> DensityField:
    f = DensityField(grid, samples)
    return normalize(f) if normalize_mass else f


# ---------------------------------------------------------------------------
# Evaluation


def _snap(u, tol=1e-9):
    r = np.round(u)
    return np.where(np.abs(u - r) < tol, r, u)


def _lagrange(xs, x):
    """Lagrange basis weights at x for stencil nodes xs (shape (P, k))."""
    k = xs.shape[1]
    w = np.ones_like(xs)
    for j in range(k):
        for m in range(k):
            if m != j:
                w[:, j] *= (x - xs[:, m]) / (xs[:, j] - xs[:, m])
    return w


def _locate_periodic(nodes, x, order):
    n = nodes.shape[0]
    h = 2.0 * math.pi / n
    u = _snap(np.mod((x - nodes[0]) / h, n))
    i0 = np.floor(u).astype(int)
    t = u - i0
    if order == 1:
        return np.stack([i0 % n, (i0 + 1) % n], -1), np.stack([1.0 - t, t], -1)
    offs = np.arange(-1, 3)
    idx = (i0[:, None] + offs) % n
    return idx, _lagrange(np.broadcast_to(offs.astype(float), idx.shape), t)


def _locate_sorted(nodes, x, order):
    n = nodes.shape[0]
    xc = np.clip(x, nodes[0], nodes[-1])
    i0 = np.clip(np.searchsorted(nodes, xc, side="right") - 1, 0, n - 2)
    if order == 1:
        t = (xc - nodes[i0]) / (nodes[i0 + 1] - nodes[i0])
        t = np.where(np.abs(t) < 1e-12, 0.0, np.where(np.abs(t - 1) < 1e-12, 1.0, t))
        return np.stack([i0, i0 + 1], -1), np.stack([1.0 - t, t], -1)
    lo = np.clip(i0 - 1, 0, n - 4)
    idx = lo[:, None] + np.arange(4)
    w = _lagrange(nodes[idx], xc)
    exact = np.isclose(nodes[idx], xc[:, None], rtol=0, atol=1e-12)
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(float)
    return idx, w


def _so3_extended(f: DensityField):
    """Samples padded with one mirrored ghost layer at each end of the beta axis."""
    na, nb, ng = f.grid.shape
    if na % 2 or ng % 2:
        return None, None
    arr = f.array()
    ghost = lambda j: np.roll(arr[:, j, :], (na // 2, ng // 2), axis=(0, 1))
    ext = np.concatenate([ghost(0)[:, None, :], arr, ghost(-1)[:, None, :]], axis=1)
    b = f.grid.axes[1]
    bext = np.concatenate([[-b[0]], b, [2 * math.pi - b[-1]]])
    return ext, bext


def _tensor_stencil(values, locs):
    out = 0.0
    for corner in itertools.product(*(range(idx.shape[1]) for idx, _ in locs)):
        idx = tuple(locs[ax][0][:, c] for ax, c in enumerate(corner))
        w = 1.0
        for ax, c in enumerate(corner):
            w = w * locs[ax][1][:, c]
        out = out + w * values[idx]
    return out


def evaluate_coords(f: DensityField, q, method="linear") -> np.ndarray:
    """Evaluate at chart coordinates ``q`` (shape ``(..., dim)``).

    ``method`` is ``"linear"`` (multilinear), ``"cubic"`` (local 4-point
    Lagrange per axis, not on SO3) or ``"spectral"`` (SO3 only).
    """
    grid = f.grid
    q = np.asarray(q, dtype=float)
    if method == "spectral":
        if not is_so3(grid):
            raise DensityError("spectral evaluation is available on SO3 Euler grids only")
        return np.maximum(hs.evaluate_spectrum(f.spectrum, q), 0.0)
    if method not in ("linear", "cubic"):
        raise DensityError(f"unknown evaluation method {method!r}")
    order = 1 if method == "linear" else 3
    if order == 3 and is_so3(grid):
        raise DensityError("cubic evaluation is not offered on SO3; use spectral")
    flat = q.reshape(-1, q.shape[-1])
    values = f.array()
    locs = []
    for ax, kind in enumerate(grid.axis_kinds):
        x = flat[:, ax]
        nodes = grid.axes[ax]
        if kind == PERIODIC:
            locs.append(_locate_periodic(nodes, x, order))
        elif kind == LEGENDRE:
            lo, hi = grid.truncation[ax]
            bad = (x < lo - 1e-12) | (x > hi + 1e-12)
            if np.any(bad):
                k = int(np.argmax(bad))
                raise DomainError(f"coordinate {ax} = {x[k]:.6g} outside truncation box [{lo}, {hi}]",
                                  coordinate=(ax, float(x[k])))
            locs.append(_locate_sorted(nodes, x, order))
        else:
            ext, bext = _so3_extended(f)
            if ext is None:
                locs.append(_locate_sorted(nodes, x, 1))
            else:
                values = ext
                locs.append(_locate_sorted(bext, x, 1))
    out = _tensor_stencil(values, locs)
    return np.maximum(np.asarray(out, dtype=float), 0.0).reshape(q.shape[:-1])


def evaluate_matrices(f: DensityField, mats, method="linear") -> np.ndarray:
    if isinstance(f.grid.group, ProductGroup):
        raise DensityError("evaluate product-group fields through their coordinates")
    q = chart_coords(f.grid.group, f.grid.chart, mats, allow_cut=True)
    return evaluate_coords(f, q, method)


def evaluate(f: DensityField, g: GroupElement, method="linear") -> float:
    if g.group is not f.grid.group:
        raise DensityError(f"element of {g.group.value} on a {f.grid.group.value} density")
    return float(evaluate_matrices(f, g.mat[None], method)[0])


# ---------------------------------------------------------------------------
# Shifts


def _shift_mats(grid, mode, h):
    mats = grid.matrices()
    if mode == "invert":
        return inverse_matrices(grid.group, mats)
    hm = h.mat
    hinv = inverse_matrices(grid.group, hm)
    if mode == "left":
        return hinv @ mats
    if mode == "right":
        return mats @ hm
    if mode == "conjugate":
        return hinv @ mats @ hm
    raise DensityError(f"unknown transform mode {mode!r}")


def transform(f: DensityField, mode: str, h: GroupElement | None = None,
              method="auto") -> DensityField:
    """Left shift f(h^-1 g), right shift f(g h), conjugation f(h^-1 g h) or inversion f(g^-1).

    On SO3 the default evaluates the band-limited interpolant exactly; elsewhere
    samples are interpolated multilinearly.  The result is renormalized.
    """
    if mode != "invert":
        if h is None:
            raise DensityError(f"{mode} transform needs a group element")
        if h.group is not f.grid.group:
            raise DensityError("shift element from a different group")
    if method == "auto":
        method = "spectral" if is_so3(f.grid) else "linear"
    if method == "spectral":
        if not is_so3(f.grid):
            raise DensityError("spectral transforms need an SO3 Euler grid")
        spec = hs.shift_spectrum(f.spectrum, mode, h)
        vals = hs.synthesize(spec, f.grid)
        scale = max(1.0, float(np.max(np.abs(vals))))
        vals = np.where(vals < 0, np.where(vals > -1e-9 * scale, 0.0, vals), vals)
    else:
        vals = evaluate_matrices(f, _shift_mats(f.grid, mode, h), "linear")
    # inversion and conjugation preserve both symmetry and class status
    flags = f.flags if mode in ("conjugate", "invert") else frozenset()
    return normalize(DensityField(f.grid, vals, flags))


def symmetry_residual(f: DensityField, method="auto") -> float:
    g = transform(f, "invert", method=method)
    return float(np.max(np.abs(g.samples - f.samples)))


def class_residual(f: DensityField, rng=None, trials=3, method="auto") -> float:
    rng = np.random.default_rng(12345) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        h = random_element(f.grid.group, rng, 0.5)
        g = transform(f, "conjugate", h, method=method)
        worst = max(worst, float(np.max(np.abs(g.samples - f.samples))))
    return worst


def verify_flags(f: DensityField, tol=FLAG_TOL) -> DensityField:
    """Attach the symmetric/class_function flags that hold numerically."""
    if isinstance(f.grid.group, ProductGroup):
        return DensityField(f.grid, f.samples)
    flags = set()
    scale = max(1.0, float(np.max(f.samples)))
    if symmetry_residual(f) < tol * scale:
        flags.add("symmetric")
    if class_residual(f) < tol * scale:
        flags.add("class_function")
    return DensityField(f.grid, f.samples, frozenset(flags))


# ---------------------------------------------------------------------------
# Convolution


def _so3_direct(f1: DensityField, f2: DensityField) -> np.ndarray:
    """sum_h w_h f1(h) f2(h^-1 g) on an Euler grid, f2 read from its band-limited interpolant.

    With h = R3(a)R1(b)R3(c) and g = R3(x)R1(y)R3(z) one has
    h^-1 g = R3(-c) M R3(z) where M = R1(-b) R3(x - a) R1(y) depends on
    (b, x - a, y) only, and x - a stays on the uniform alpha grid.
    """
    grid = f1.grid
    na, nb, ng = grid.shape
    L = grid.bandwidth_capacity
    spec = f2.spectrum
    al, be, ga = grid.axes
    W = (grid.weights * f1.samples).reshape(grid.shape)
    ms = np.arange(-L, L + 1)
    e_c = np.exp(-1j * np.outer(ga, ms))    # [c, n] for e^{-i n c}
    e_z = np.exp(1j * np.outer(ga, ms))     # [z, m] for e^{i m z}
    coef = np.zeros((L + 1, 2 * L + 1, 2 * L + 1), dtype=complex)
    for l, blk in enumerate(spec.blocks):
        coef[l, L - l:L + l + 1, L - l:L + l + 1] = (2 * l + 1) * blk.T * hs._phase(l)
    acc = np.zeros((na, nb, ng), dtype=complex)           # Fourier in x
    Rmid = rot3(al)[:, None] @ rot1(be)[None, :]       # [a', k] R3(a') R1(y_k)
    for bi in range(nb):
        M = rot1(-be[bi]) @ Rmid                        # [a', k]
        ang = euler_zxz_angles(M)
        a2, b2, g2 = ang[..., 0].reshape(-1), ang[..., 1].reshape(-1), ang[..., 2].reshape(-1)
        d = hs._d_table(L, np.ascontiguousarray(b2))     # [l, n, m, p]
        S = np.einsum("lnm,lnmp->pnm", coef, d)
        T = S * np.exp(1j * np.outer(a2, ms))[:, :, None] * np.exp(1j * np.outer(g2, ms))[:, None, :]
        # V[p, c, z] = sum_{n,m} T[p,n,m] e^{-i n c} e^{i m z}
        V = ((e_c @ T) @ e_z.T).real.reshape(na, nb, ng, ng)
        # circular convolution over alpha: out[x] += sum_{a,c} W[a,c] V[x - a]
        Vf = np.fft.fft(V, axis=0)
        Wf = np.fft.fft(W[:, bi, :], axis=0)            # [w, c]
        acc += (Wf[:, None, None, :] @ Vf)[:, :, 0, :]
    out = np.fft.ifft(acc, axis=0).real
    return out.reshape(-1)


def _generic_direct(f1: DensityField, f2: DensityField, interp="cubic", chunk=1 << 16) -> np.ndarray:
    grid = f1.grid
    mats = grid.matrices()
    inv = inverse_matrices(grid.group, mats)
    w = grid.weights * f1.samples
    live = np.nonzero(w != 0)[0]
    out = np.zeros(grid.size)
    n = grid.size
    rows_per = max(1, chunk // n)
    for start in range(0, live.shape[0], rows_per):
        hs_idx = live[start:start + rows_per]
        prod = inv[hs_idx][:, None] @ mats[None, :]         # h^-1 g
        q = chart_coords(grid.group, grid.chart, prod.reshape(-1, *prod.shape[-2:]))
        vals = _evaluate_or_zero(f2, q, interp).reshape(len(hs_idx), n)
        out += w[hs_idx] @ vals
    return out


def _se2_direct(f1: DensityField, f2: DensityField, interp="cubic", chunk=64) -> np.ndarray:
    """SE2 (x, y, theta) path: theta_g - theta_h is a grid angle, so only the
    translation R(-theta_h)(x_g - x_h) needs interpolating."""
    grid = f1.grid
    nx, ny, nt = grid.shape
    xs, ys, ts = grid.axes
    order = 1 if interp == "linear" else 3
    lox, hix = grid.truncation[0]
    loy, hiy = grid.truncation[1]
    F2 = f2.array()
    W = (grid.weights * f1.samples).reshape(grid.shape)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    X, Y = X.reshape(-1), Y.reshape(-1)
    out = np.zeros(grid.shape)
    live = np.argwhere(W != 0)
    for start in range(0, live.shape[0], chunk):
        blk = live[start:start + chunk]
        xh, yh, th = xs[blk[:, 0]], ys[blk[:, 1]], ts[blk[:, 2]]
        c, s_ = np.cos(th)[:, None], np.sin(th)[:, None]
        dx, dy = X[None, :] - xh[:, None], Y[None, :] - yh[:, None]
        px, py = (c * dx + s_ * dy).reshape(-1), (-s_ * dx + c * dy).reshape(-1)
        inside = (px >= lox) & (px <= hix) & (py >= loy) & (py <= hiy)
        ix, wx = _locate_sorted(xs, np.clip(px, lox, hix), order)
        iy, wy = _locate_sorted(ys, np.clip(py, loy, hiy), order)
        V = 0.0
        for a in range(ix.shape[1]):
            for b in range(iy.shape[1]):
                V = V + (wx[:, a] * wy[:, b])[:, None] * F2[ix[:, a], iy[:, b], :]
        V = np.maximum(V, 0.0) * inside[:, None]
        V = V.reshape(len(blk), nx, ny, nt)
        for k, (i, j, kt) in enumerate(blk):
            # theta_g - theta_h = ts[(kg - kt + nt // 2) % nt]
            out += W[i, j, kt] * np.roll(V[k], kt - nt // 2, axis=-1)
    return out.reshape(-1)


def _evaluate_or_zero(f, q, method="cubic"):
    """Multilinear values with points outside the truncation box set to zero."""
    grid = f.grid
    inside = np.ones(q.shape[0], dtype=bool)
    qc = q.copy()
    for ax, kind in enumerate(grid.axis_kinds):
        if kind == LEGENDRE:
            lo, hi = grid.truncation[ax]
            inside &= (q[:, ax] >= lo) & (q[:, ax] <= hi)
            qc[:, ax] = np.clip(q[:, ax], lo, hi)
    vals = evaluate_coords(f, qc, method)
    return np.where(inside, vals, 0.0)


def convolve(f1: DensityField, f2: DensityField, method="direct", normalize_result=True,
             return_mass=False, interp="cubic"):
    """(f1 * f2)(g) = int f1(h) f2(h^-1 g) dh.

    ``method="direct"`` sums the quadrature over h for every output node
    (O(N^2)); ``"spectral"`` multiplies SO3 Fourier blocks.  Off-grid values
    of f2 come from its band-limited interpolant on SO3 and from ``interp``
    ("cubic" or "linear") elsewhere.
    """
    if not f1.grid.same_as(f2.grid):
        raise DensityError("convolution needs both densities on the same grid")
    grid = f1.grid
    if isinstance(grid.group, ProductGroup):
        raise DensityError("convolution on product grids is not supported")
    if method == "spectral":
        if not is_so3(grid):
            raise DensityError("spectral convolution needs an SO3 Euler grid")
        vals = hs.synthesize(hs.spectral_convolve(f1.spectrum, f2.spectrum), grid)
    elif method == "direct":
        if is_so3(grid):
            vals = _so3_direct(f1, f2)
        elif grid.chart is ChartId.CartesianTheta and grid.shape[2] % 2 == 0:
            vals = _se2_direct(f1, f2, interp)
        else:
            vals = _generic_direct(f1, f2, interp)
    else:
        raise DensityError(f"unknown convolution method {method!r}")
    scale = max(1.0, float(np.max(np.abs(vals))))
    vals = np.where((vals < 0) & (vals > -1e-9 * scale), 0.0, vals)
    mass = integrate(grid, vals)
    if not grid.group.compact:
        expect = f1.mass * f2.mass
        if abs(mass - expect) > MASS_ESCAPE_TOL * expect:
            raise MassEscapeError(f"convolution mass {mass:.6g} differs from {expect:.6g}: support "
                                  "leaks through the truncation box or the grid is under-resolved")
    out = DensityField(grid, vals)
    if normalize_result:
        out = normalize(out)
    return (out, mass) if return_mass else out


# ---------------------------------------------------------------------------
# Lie derivatives


def _fd_weights(x0, xs, order=1):
    """Finite-difference weights at x0 over stencil xs (Fornberg's recursion)."""
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@functools.lru_cache(maxsize=64)
def _legendre_diff_matrix(nodes_bytes):
    x = np.frombuffer(nodes_bytes, dtype=float)
    n = x.shape[0]
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sgn = np.prod(np.sign(diff), axis=1)
    ratio = np.exp(logw[None, :] - logw[:, None]) * (sgn[None, :] * sgn[:, None])
    D = ratio / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _axis_derivative(f: DensityField, ax: int, info: dict) -> np.ndarray:
    grid = f.grid
    arr = f.array()
    kind = grid.axis_kinds[ax]
    nodes = grid.axes[ax]
    if kind == PERIODIC:
        h = 2.0 * math.pi / nodes.shape[0]
        r = lambda k: np.roll(arr, -k, axis=ax)
        return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12.0 * h)
    if kind == LEGENDRE:
        D = _legendre_diff_matrix(np.ascontiguousarray(nodes).tobytes())
        return np.moveaxis(np.tensordot(D, np.moveaxis(arr, ax, 0), axes=(1, 0)), 0, ax)
    # SO3 beta axis: 5-point stencils, ghost-padded when the alpha/gamma counts are even
    ext, bext = _so3_extended(f)
    nb = nodes.shape[0]
    out = np.zeros_like(arr)
    if ext is not None:
        na, _, ng = grid.shape
        ext2 = np.concatenate([np.roll(arr[:, 1:2, :], (na // 2, ng // 2), axis=(0, 2)), ext,
                               np.roll(arr[:, -2:-1, :], (na // 2, ng // 2), axis=(0, 2))], axis=1)
        bext2 = np.concatenate([[-nodes[1]], bext, [2 * math.pi - nodes[-2]]])
        for j in range(nb):
            k = j + 2
            w = _fd_weights(bext2[k], bext2[k - 2:k + 3])
            out[:, j, :] = np.tensordot(ext2[:, k - 2:k + 3, :], w, axes=([1], [0]))
        return out
    one_sided = 0
    for j in range(nb):
        lo = min(max(j - 2, 0), nb - 5)
        if lo != j - 2:
            one_sided += 1
        w = _fd_weights(nodes[j], nodes[lo:lo + 5])
        out[:, j, :] = np.tensordot(arr[:, lo:lo + 5, :], w, axes=([1], [0]))
    info["one_sided_nodes"] = info.get("one_sided_nodes", 0) + one_sided * grid.shape[0] * grid.shape[2]
    return out


def chart_gradient(f: DensityField, info: dict | None = None) -> np.ndarray:
    """Chart-coordinate gradient at every node, shape (N, dim)."""
    info = {} if info is None else info
    cols = [_axis_derivative(f, ax, info).reshape(-1) for ax in range(len(f.grid.shape))]
    return np.stack(cols, axis=-1)


def _direction(group, i):
    v = np.zeros(group.dim)
    if np.isscalar(i):
        v[int(i)] = 1.0
    else:
        v = np.asarray(i, dtype=float)
    return v


def lie_derivative(f: DensityField, i, side="right", method="auto",
                   info: dict | None = None) -> np.ndarray:
    """Sampled Lie derivative along basis element ``i`` (or an algebra vector).

    right: d/dt f(g exp(tX)), left: d/dt f(exp(-tX) g), both at t = 0.
    ``method`` is ``"spectral"`` (SO3, exact for band-limited fields), ``"fd"``
    (chart gradient with Jacobians) or ``"auto"``.
    """
    if side not in ("left", "right"):
        raise DensityError(f"side must be 'left' or 'right', got {side!r}")
    grid = f.grid
    if isinstance(grid.group, ProductGroup):
        raise DensityError("Lie derivatives on product grids are not supported")
    v = _direction(grid.group, i)
    if method == "auto":
        method = "spectral" if is_so3(grid) else "fd"
    if method == "spectral":
        if not is_so3(grid):
            raise DensityError("spectral derivatives need an SO3 Euler grid")
        spec = f.spectrum
        total = None
        for k in range(3):
            if v[k] == 0:
                continue
            d = hs.derivative_spectrum(spec, k, side) * v[k]
            total = d if total is None else total + d
        if total is None:
            return np.zeros(grid.size)
        return hs.synthesize(total, grid)
    if method != "fd":
        raise DensityError(f"unknown derivative method {method!r}")
    grad = chart_gradient(f, info)
    J = jacobian(grid.group, grid.chart, grid.nodes, side)
    # X^r f = (J_r^-T grad)_i ; X^l f = -(J_l^-T grad)_i
    sol = np.linalg.solve(np.swapaxes(J, -1, -2), grad[..., None])[..., 0]
    out = sol @ v
    return -out if side == "left" else out


def lie_derivatives(f: DensityField, side="right", method="auto") -> np.ndarray:
    """All basis derivatives, shape (dim, N)."""
    return np.stack([lie_derivative(f, k, side, method) for k in range(f.grid.group.dim)])


# ---------------------------------------------------------------------------
# Marginals


def marginalize(f: DensityField, spec: DecompositionSpec):
    grid = f.grid
    if spec.kind == "direct_product":
        if not isinstance(grid.group, ProductGroup):
            raise DensityError("direct_product marginals need a product grid")
        sizes = [fg.size for fg in grid.factor_grids]
        arr = f.samples.reshape(sizes)
        outs = []
        for k, fg in enumerate(grid.factor_grids):
            m = arr
            for ax in reversed(range(len(sizes))):
                if ax != k:
                    m = np.tensordot(m, grid.factor_grids[ax].weights, axes=([ax], [0]))
            outs.append(normalize(DensityField(fg, m)))
        return tuple(outs)
    if not is_so3(grid):
        raise DensityError(f"{spec.kind} marginals are defined for SO3 Euler grids")
    if spec.subgroup != "gamma":
        raise DensityError("the SO3 subgroup is the gamma circle")
    na, nb, ng = grid.shape
    arr = f.array()
    wa = np.full(na, 1.0 / na)
    wb = grid.axis_weights[1] / 2.0
    wg = np.full(ng, 1.0 / ng)
    al, be, ga = grid.axes
    if spec.kind == "coset_GH":
        f_gh = np.einsum("abc,c->ab", arr, wg)
        f_h = np.einsum("abc,a,b->c", arr, wa, wb)
        wq = np.outer(wa, wb).reshape(-1)
        return (Marginal("G/H", (al, be), wq, f_gh.reshape(-1)), Marginal("H", (ga,), wg, f_h))
    if spec.kind == "double_coset_KGH":
        fa = np.einsum("abc,b,c->a", arr, wb, wg)
        fb = np.einsum("abc,a,c->b", arr, wa, wg)
        fc = np.einsum("abc,a,b->c", arr, wa, wb)
        return (Marginal("K", (al,), wa, fa), Marginal("K\\G/H", (be,), wb, fb),
                Marginal("H", (ga,), wg, fc))
    raise DensityError(f"{spec.kind} is not admissible on SO3")


# ---------------------------------------------------------------------------
# Test-density families


def _project_positive(grid, vals, what):
    L = grid.bandwidth_capacity
    vals = hs.synthesize(hs.fourier_samples(grid, vals, L), grid)
    if vals.min() <= 0:
        raise DensityError(f"{what} lost positivity after band limiting; lower kappa")
    return normalize(DensityField(grid, vals))


def random_bandlimited(grid: Grid, rng, degree=2, kappa=1.0) -> DensityField:
    """exp(kappa y) for a random degree-limited y with max |y| = 1, projected onto the grid's band."""
    rng = np.random.default_rng(rng)
    if not is_so3(grid):
        return random_smooth(grid, rng, degree, kappa)
    blocks = [np.zeros((1, 1))]
    for l in range(1, degree + 1):
        blocks.append(rng.normal(size=(2 * l + 1,) * 2) + 1j * rng.normal(size=(2 * l + 1,) * 2))
    y = hs.synthesize(hs.SO3Spectrum(tuple(blocks)).truncate(grid.bandwidth_capacity)
                      if degree <= grid.bandwidth_capacity else hs.SO3Spectrum(tuple(blocks)), grid)
    y = y / np.max(np.abs(y))
    return _project_positive(grid, np.exp(kappa * y), "random density")


def matrix_fisher(grid: Grid, center: GroupElement, kappa: float) -> DensityField:
    """exp(kappa tr(C^T R)) band-limited to the grid; concentrated near ``center``."""
    R = grid.matrices()
    vals = np.exp(kappa * (np.einsum("ij,nij->n", center.mat, R) - 3.0))
    return _project_positive(grid, vals, "matrix Fisher density")


def random_smooth(grid: Grid, rng, degree=2, kappa=1.0, width=None) -> DensityField:
    """Random positive field: trigonometric exponent on periodic axes, Gaussian envelope on bounded axes."""
    rng = np.random.default_rng(rng)
    expo = np.zeros(grid.size)
    for ax, kind in enumerate(grid.axis_kinds):
        x = grid.nodes[:, ax]
        if kind == PERIODIC:
            for k in range(1, degree + 1):
                a, b = rng.normal(size=2) / k
                expo += kappa * (a * np.cos(k * x) + b * np.sin(k * x))
        elif kind == LEGENDRE:
            lo, hi = grid.truncation[ax]
            half = 0.5 * (hi - lo)
            s = (half / 5.0 if width is None else width) * (0.8 + 0.4 * rng.random())
            mu = 0.5 * (lo + hi) + 0.1 * half * rng.uniform(-1, 1)
            expo += -0.5 * ((x - mu) / s) ** 2
        else:
            raise DensityError("use random_bandlimited on SO3")
    return normalize(DensityField(grid, np.exp(expo - expo.max())))


def gaussian(grid: Grid, mean=0.0, sigma=1.0) -> DensityField:
    """Isotropic Gaussian in the chart coordinates of a bounded grid."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (grid.nodes.shape[1],))
    r2 = np.sum(((grid.nodes - mean) / sigma) ** 2, axis=1)
    vals = np.exp(-0.5 * r2) / (2 * math.pi * sigma ** 2) ** (grid.nodes.shape[1] / 2)
    f = DensityField(grid, vals)
    check_truncation(grid, f.samples)
    return f


def gaussian_mixture(grid: Grid, means, sigmas, weights) -> DensityField:
    vals = np.zeros(grid.size)
    for m, s, w in zip(means, sigmas, weights):
        vals += w * gaussian(grid, m, s).samples
    f = normalize(DensityField(grid, vals))
    check_truncation(grid, f.samples)
    return f


def from_spectrum(spec, grid: Grid) -> DensityField:
    return normalize(hs.so3_inverse(spec, grid))


def heat_kernel_density(grid: Grid, t: float, params=None) -> DensityField:
    """Heat kernel at time t synthesized on ``grid`` (its capacity must resolve t)."""
    L = grid.bandwidth_capacity
    f = hs.heat_kernel(t, L, grid, params)
    return DensityField(grid, f.samples, {"class_function", "symmetric"} if params is None else ())


def shifted_heat_kernel(grid: Grid, t: float, h: GroupElement, mode="left") -> DensityField:
    L = grid.bandwidth_capacity
    spec = hs.shift_spectrum(hs.heat_spectrum(t, L), mode, h)
    return from_spectrum(spec, grid)


def symmetrize(f: DensityField) -> DensityField:
    """(f(g) + f(g^-1)) / 2."""
    g = transform(f, "invert")
    return normalize(DensityField(f.grid, 0.5 * (f.samples + g.samples), {"symmetric"}))


# ---------------------------------------------------------------------------
# Serialization


def _header(f: DensityField) -> dict:
    return {"grid": f.grid.descriptor(), "flags": sorted(f.flags)}


def to_csv(f: DensityField, path) -> None:
    """CSV: a ``# grid:`` comment with the descriptor, a header, then coordinates and value."""
    names = [f"q{i}" for i in range(f.grid.nodes.shape[1])]
    with open(path, "w", newline="") as fh:
        fh.write("# grid: " + json.dumps(_header(f), sort_keys=True) + "\n")
        fh.write(",".join(names + ["value"]) + "\n")
        for q, v in zip(f.grid.nodes, f.samples):
            fh.write(",".join(repr(float(x)) for x in q) + "," + repr(float(v)) + "\n")


def from_csv(path) -> DensityField:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# grid:"):
            raise DensityError("density CSV must start with a '# grid:' line")
        header = json.loads(first[len("# grid:"):])
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    grid = grid_from_descriptor(header["grid"])
    if data.shape[0] != grid.size:
        raise DensityError(f"CSV has {data.shape[0]} rows, grid has {grid.size} nodes")
    if np.max(np.abs(data[:, :-1] - grid.nodes)) > 1e-9:
        raise DensityError("CSV coordinates do not match the grid descriptor")
    return DensityField(grid, data[:, -1], frozenset(header.get("flags", ())))


def to_bytes(f: DensityField) -> bytes:
    header = json.dumps(_header(f), sort_keys=True).encode()
    return (_BINARY_MAGIC + struct.pack("<I", len(header)) + header
            + np.ascontiguousarray(f.samples, dtype="<f8").tobytes())


def from_bytes(data: bytes) -> DensityField:
    if data[:4] != _BINARY_MAGIC:
        raise DensityError("not a density file")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen].decode())
    grid = grid_from_descriptor(header["grid"])
    samples = np.frombuffer(data[8 + hlen:], dtype="<f8")
    return DensityField(grid, samples, frozenset(header.get("flags", ())))


def save(f: DensityField, path) -> None:
    path = str(path)
    if path.endswith(".csv"):
        to_csv(f, path)
    else:
        with open(path, "wb") as fh:
            fh.write(to_bytes(f))


def load(path) -> DensityField:
    path = str(path)
    if path.endswith(".csv"):
        return from_csv(path)
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
