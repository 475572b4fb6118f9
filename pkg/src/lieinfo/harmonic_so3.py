"""Band-limited Fourier analysis on SO(3).

Representation convention (ZXZ Euler angles, m and n running -l..l)::

    U^l_{mn}(alpha, beta, gamma) = e^{i m alpha} (-i)^{m-n} d^l_{mn}(beta) e^{i n gamma}

where ``d^l_{mn}(beta) = <l m| exp(-i beta J_y) |l n>``.  This is a unitary
homomorphism, ``U^1(R3(a)) = diag(e^{-ia}, 1, e^{ia})``, and its generators are
``u(X1) = iJx``, ``u(X2) = -iJy``, ``u(X3) = iJz``.

Transforms::

    f_hat^l = int f(g) U^l(g^-1) dg
    f(g)    = sum_l (2l+1) tr(f_hat^l U^l(g))

so ``(f1 * f2)^ = f2_hat f1_hat`` and the right Lie derivative maps to
``u(X_i) f_hat``.
"""
from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .group_core import GroupElement, GroupId, ChartId, euler_zxz_angles, as_group
from .quadrature import COS_LEGENDRE, Grid, GridError, TruncationError, so3_grid

L_MAX = 32
BLOCK_THRESHOLD = 1e-13
TRUNCATION_TARGET = 1e-12
IMAG_TOL = 1e-9
SPECTRUM_SCHEMA = "lieinfo.spectrum/1"
_SPECTRUM_MAGIC = b"LISP"


class SpectrumError(ValueError):
    pass


def _check_degree(l):
    if not 0 <= l <= L_MAX:
        raise SpectrumError(f"degree {l} outside supported range 0..{L_MAX}")


# ---------------------------------------------------------------------------
# Wigner small-d


def wigner_d_explicit(l: int, beta) -> np.ndarray:
    """Small-d matrix from the closed-form sum.  Used as the recursion oracle.

    Returns shape ``beta.shape + (2l+1, 2l+1)``.
    """
    beta = np.asarray(beta, dtype=float)
    c, s = np.cos(beta / 2.0), np.sin(beta / 2.0)
    out = np.zeros(beta.shape + (2 * l + 1, 2 * l + 1))
    for mp in range(-l, l + 1):
        for m in range(-l, l + 1):
            out[..., mp + l, m + l] = _d_element(l, mp, m, c, s)
    return out


def _d_element(l, mp, m, c, s):
    lg = math.lgamma
    pref = 0.5 * (lg(l + mp + 1) + lg(l - mp + 1) + lg(l + m + 1) + lg(l - m + 1))
    total = np.zeros_like(c)
    for k in range(max(0, m - mp), min(l + m, l - mp) + 1):
        logc = pref - (lg(l + m - k + 1) + lg(k + 1) + lg(mp - m + k + 1) + lg(l - mp - k + 1))
        sign = -1.0 if (mp - m + k) % 2 else 1.0
        total = total + sign * math.exp(logc) * c ** (2 * l + m - mp - 2 * k) * s ** (mp - m + 2 * k)
    return total


@functools.lru_cache(maxsize=32)
def _d_table_cached(L: int, beta_bytes: bytes) -> np.ndarray:
    beta = np.frombuffer(beta_bytes, dtype=float)
    return _d_table(L, beta)


def _d_table(L, beta):
    """d^l_{mn}(beta) for all l <= L, shape (L+1, 2L+1, 2L+1, nbeta).

    Three-term recursion in l at fixed (m, n), seeded at l = max(|m|, |n|).
    """
    nb = beta.shape[0]
    size = 2 * L + 1
    table = np.zeros((L + 1, size, size, nb))
    cb = np.cos(beta)
    c, s = np.cos(beta / 2.0), np.sin(beta / 2.0)
    ms = np.arange(-L, L + 1)
    M = ms[:, None] * np.ones(size, dtype=int)[None, :]
    N = M.T
    l0 = np.maximum(np.abs(M), np.abs(N))
    for m in range(-L, L + 1):
        for n in range(-L, L + 1):
            l = max(abs(m), abs(n))
            table[l, m + L, n + L] = _d_element(l, m, n, c, s)
    if L >= 1:
        table[1, L, L] = cb  # m = n = 0 needs an explicit second seed
    Mf, Nf = M.astype(float)[..., None], N.astype(float)[..., None]
    for J in range(1, L):
        active = (l0 <= J)[..., None]
        Jp = J + 1.0
        den = J * np.sqrt(np.maximum((Jp ** 2 - Mf ** 2) * (Jp ** 2 - Nf ** 2), 0.0))
        prev_coef = Jp * np.sqrt(np.maximum((J ** 2 - Mf ** 2) * (J ** 2 - Nf ** 2), 0.0))
        num = (2 * J + 1) * (J * Jp * cb - Mf * Nf) * table[J] - prev_coef * table[J - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        table[J + 1] = np.where(active, nxt, table[J + 1])
    return table


def wigner_d_table(L: int, beta) -> np.ndarray:
    """Cached small-d table ``[l, m+L, n+L, k]`` at the angles ``beta[k]``."""
    if not 0 <= L <= L_MAX:
        raise SpectrumError(f"bandwidth {L} outside supported range 0..{L_MAX}")
    beta = np.ascontiguousarray(np.asarray(beta, dtype=float).reshape(-1))
    return _d_table_cached(int(L), beta.tobytes())


def wigner_d(l: int, beta: float) -> np.ndarray:
    _check_degree(l)
    t = wigner_d_table(l, np.array([beta]))[l, :, :, 0]
    return t


def _phase(l):
    m = np.arange(-l, l + 1)
    return (-1j) ** ((m[:, None] - m[None, :]) % 4)


def _angles(g) -> np.ndarray:
    if isinstance(g, GroupElement):
        if g.group is not GroupId.SO3:
            raise SpectrumError("wigner_D needs an SO3 element")
        return euler_zxz_angles(g.mat)
    g = np.asarray(g, dtype=float)
    if g.shape == (3, 3):
        return euler_zxz_angles(g)
    if g.shape != (3,):
        raise SpectrumError(f"expected ZXZ angles or a rotation matrix, got shape {g.shape}")
    return g


def wigner_D(l: int, g) -> np.ndarray:
    """Unitary irreducible representation U^l(g); ``g`` is an SO3 element, a rotation matrix or ZXZ angles."""
    _check_degree(l)
    a, b, c = _angles(g)
    m = np.arange(-l, l + 1)
    d = wigner_d(l, b)
    return np.exp(1j * m * a)[:, None] * _phase(l) * d * np.exp(1j * m * c)[None, :]


def wigner_D_all(L: int, g) -> list:
    """[U^0(g), ..., U^L(g)] from a single small-d table."""
    if not 0 <= L <= L_MAX:
        raise SpectrumError(f"bandwidth {L} outside supported range 0..{L_MAX}")
    a, b, c = _angles(g)
    d = wigner_d_table(L, np.array([b]))[..., 0]
    out = []
    for l in range(L + 1):
        m = np.arange(-l, l + 1)
        dl = d[l, L - l:L + l + 1, L - l:L + l + 1]
        out.append(np.exp(1j * m * a)[:, None] * _phase(l) * dl * np.exp(1j * m * c)[None, :])
    return out


def angular_momentum(l: int):
    """Standard (Jx, Jy, Jz) in the basis m = -l..l."""
    m = np.arange(-l, l + 1, dtype=float)
    jp = np.zeros((2 * l + 1, 2 * l + 1))
    for k in range(2 * l):
        mm = m[k]
        jp[k + 1, k] = math.sqrt(l * (l + 1) - mm * (mm + 1))
    jm = jp.T
    jx = (jp + jm) / 2.0
    jy = (jp - jm) / 2j
    jz = np.diag(m)
    return jx.astype(complex), jy, jz.astype(complex)


@functools.lru_cache(maxsize=64)
def _u_cached(l):
    jx, jy, jz = angular_momentum(l)
    us = np.stack([1j * jx, -1j * jy, 1j * jz])
    us.setflags(write=False)
    return us


def u_matrices(l: int) -> np.ndarray:
    """Generators u(X_i, l) = d/dt U^l(exp(t X_i)) at t = 0, stacked as (3, 2l+1, 2l+1)."""
    _check_degree(l)
    return _u_cached(l)


# ---------------------------------------------------------------------------
# Spectra


@dataclass(frozen=True, eq=False)
class SO3Spectrum:
    blocks: tuple

    def __post_init__(self):
        blocks = []
        for l, b in enumerate(self.blocks):
            b = np.array(b, dtype=complex)
            if b.shape != (2 * l + 1, 2 * l + 1):
                raise SpectrumError(f"block {l} must be {2 * l + 1}x{2 * l + 1}, got {b.shape}")
            b.setflags(write=False)
            blocks.append(b)
        if not blocks:
            raise SpectrumError("spectrum needs at least the l = 0 block")
        if len(blocks) - 1 > L_MAX:
            raise SpectrumError(f"bandwidth above {L_MAX}")
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def L(self) -> int:
        return len(self.blocks) - 1

    @staticmethod
    def delta(L: int) -> "SO3Spectrum":
        return SO3Spectrum(tuple(np.eye(2 * l + 1) for l in range(L + 1)))

    @staticmethod
    def uniform(L: int) -> "SO3Spectrum":
        return SO3Spectrum(tuple(np.eye(1) if l == 0 else np.zeros((2 * l + 1,) * 2)
                                 for l in range(L + 1)))

    @staticmethod
    def plancherel_weight(l: int) -> int:
        return 2 * l + 1

    def _same(self, other):
        if not isinstance(other, SO3Spectrum):
            return NotImplemented
        if other.L != self.L:
            raise SpectrumError(f"bandwidth mismatch {self.L} vs {other.L}")
        return True

    def __add__(self, other):
        if self._same(other) is NotImplemented:
            return NotImplemented
        return SO3Spectrum(tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other):
        if self._same(other) is NotImplemented:
            return NotImplemented
        return SO3Spectrum(tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __mul__(self, c):
        return SO3Spectrum(tuple(c * b for b in self.blocks))

    __rmul__ = __mul__

    def map_blocks(self, fn) -> "SO3Spectrum":
        return SO3Spectrum(tuple(fn(l, b) for l, b in enumerate(self.blocks)))

    def truncate(self, L: int) -> "SO3Spectrum":
        if L > self.L:
            pad = tuple(np.zeros((2 * l + 1,) * 2) for l in range(self.L + 1, L + 1))
            return SO3Spectrum(self.blocks + pad)
        return SO3Spectrum(self.blocks[:L + 1])

    def frobenius_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b) for b in self.blocks])

    def spectral_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b, 2) for b in self.blocks])

    def l2_norm_sq(self) -> float:
        """Plancherel side: sum (2l+1) ||f_hat^l||_F^2."""
        return math.fsum((2 * l + 1) * float(np.sum(np.abs(b) ** 2))
                         for l, b in enumerate(self.blocks))

    def distance(self, other) -> float:
        """Max Frobenius norm of the block differences."""
        self._same(other)
        return max(float(np.linalg.norm(a - b)) for a, b in zip(self.blocks, other.blocks))

    def reality_residual(self) -> float:
        """Deviation from the symmetry conj(f[m,n]) = (-1)^(m-n) f[-m,-n] of real functions."""
        worst = 0.0
        for l, b in enumerate(self.blocks):
            m = np.arange(-l, l + 1)
            sign = (-1.0) ** ((m[:, None] - m[None, :]) % 2)
            worst = max(worst, float(np.max(np.abs(np.conj(b) - sign * b[::-1, ::-1]))))
        return worst

    def is_class(self, tol=1e-10) -> bool:
        """Every block a multiple of the identity."""
        for b in self.blocks:
            s = np.trace(b) / b.shape[0]
            if np.max(np.abs(b - s * np.eye(b.shape[0]))) > tol:
                return False
        return True

    # serialization: magic, u32 header length, JSON header, complex128 LE row-major blocks
    def to_bytes(self) -> bytes:
        header = json.dumps({"schema": SPECTRUM_SCHEMA, "L": self.L}, sort_keys=True).encode()
        payload = b"".join(np.ascontiguousarray(b, dtype="<c16").tobytes() for b in self.blocks)
        return _SPECTRUM_MAGIC + struct.pack("<I", len(header)) + header + payload

    @staticmethod
    def from_bytes(data: bytes) -> "SO3Spectrum":
        if data[:4] != _SPECTRUM_MAGIC:
            raise SpectrumError("not a spectrum file")
        (hlen,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + hlen].decode())
        if header.get("schema") != SPECTRUM_SCHEMA:
            raise SpectrumError(f"unsupported spectrum schema {header.get('schema')!r}")
        L = int(header["L"])
        body = np.frombuffer(data[8 + hlen:], dtype="<c16")
        expected = sum((2 * l + 1) ** 2 for l in range(L + 1))
        if body.size != expected:
            raise SpectrumError(f"payload holds {body.size} coefficients, expected {expected}")
        blocks, pos = [], 0
        for l in range(L + 1):
            k = (2 * l + 1) ** 2
            blocks.append(body[pos:pos + k].reshape(2 * l + 1, 2 * l + 1))
            pos += k
        return SO3Spectrum(tuple(blocks))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def load(path) -> "SO3Spectrum":
        with open(path, "rb") as fh:
            return SO3Spectrum.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Transforms


def _check_so3_grid(grid: Grid, L: int):
    if grid.group is not GroupId.SO3 or grid.chart is not ChartId.EulerZXZ:
        raise GridError("SO3 transforms need an SO3 EulerZXZ grid")
    if grid.bandwidth_capacity < L:
        raise GridError(f"grid {grid.resolution} is exact only up to degree "
                        f"{grid.bandwidth_capacity}; bandwidth {L} requested")


def fourier_samples(grid: Grid, samples, L: int) -> SO3Spectrum:
    """Forward transform of raw samples on an Euler grid (FFT in alpha, gamma)."""
    _check_so3_grid(grid, L)
    na, nb, ng = grid.shape
    f = np.asarray(samples, dtype=float).reshape(grid.shape)
    F = np.fft.fft2(f, axes=(0, 2))  # F[p, b, q] = sum f e^{-i p alpha} e^{-i q gamma}
    wb = grid.axis_weights[1] / (2.0 * na * ng)
    d = wigner_d_table(L, grid.axes[1])
    blocks = []
    for l in range(L + 1):
        idx = np.arange(-l, l + 1)
        # sub[n, b, m] = F[n, b, m]
        sub = F[np.mod(idx, na)][:, :, np.mod(idx, ng)]
        dl = d[l, L - l:L + l + 1, L - l:L + l + 1, :]  # [n, m, b]
        # f_hat[m, n] = i^{n-m} sum_b w_b d_{nm}(b) F[n, b, m]
        core = np.einsum("nmb,nbm,b->mn", dl, sub, wb)
        blocks.append(np.conj(_phase(l)).T * core)
    return SO3Spectrum(tuple(blocks))


def synthesize(spec: SO3Spectrum, grid: Grid, return_imag=False):
    """Inverse transform onto an Euler grid, returning real samples in C order."""
    L = spec.L
    _check_so3_grid(grid, L)
    na, nb, ng = grid.shape
    d = wigner_d_table(L, grid.axes[1])
    G = np.zeros((na, nb, ng), dtype=complex)
    for l, blk in enumerate(spec.blocks):
        idx = np.arange(-l, l + 1)
        dl = d[l, L - l:L + l + 1, L - l:L + l + 1, :]  # [n, m, b]
        # coefficient of e^{i n alpha} e^{i m gamma}: (2l+1) f[m, n] (-i)^{n-m} d_{nm}(beta)
        coef = (2 * l + 1) * blk.T * _phase(l)  # [n, m]
        contrib = coef[:, :, None] * dl
        G[np.ix_(np.mod(idx, na), np.arange(nb), np.mod(idx, ng))] += contrib.transpose(0, 2, 1)
    vals = np.fft.ifft2(G, axes=(0, 2)) * (na * ng)
    imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    real = np.ascontiguousarray(vals.real.reshape(-1))
    if return_imag:
        return real, imag
    return real


def evaluate_spectrum(spec: SO3Spectrum, angles, chunk=4096) -> np.ndarray:
    """Band-limited function value at arbitrary ZXZ angles, shape ``angles.shape[:-1]``."""
    angles = np.asarray(angles, dtype=float)
    flat = angles.reshape(-1, 3)
    L = spec.L
    out = np.empty(flat.shape[0])
    ms = np.arange(-L, L + 1)
    for start in range(0, flat.shape[0], chunk):
        a, b, c = flat[start:start + chunk].T
        d = _d_table(L, np.ascontiguousarray(b))
        ea = np.exp(1j * np.outer(ms, a))  # [n, k]
        eg = np.exp(1j * np.outer(ms, c))  # [m, k]
        acc = np.zeros(a.shape[0], dtype=complex)
        for l, blk in enumerate(spec.blocks):
            sl = slice(L - l, L + l + 1)
            coef = (2 * l + 1) * blk.T * _phase(l)  # [n, m]
            acc += np.einsum("nm,nmk,nk,mk->k", coef, d[l, sl, sl, :], ea[sl], eg[sl])
        out[start:start + chunk] = acc.real
    return out.reshape(angles.shape[:-1])


def so3_fourier(f, L: int) -> SO3Spectrum:
    """Forward transform of a DensityField."""
    return fourier_samples(f.grid, f.samples, L)


def so3_inverse(spec: SO3Spectrum, grid: Grid, clamp_tol=1e-9):
    """Inverse transform to a DensityField.

    Negative samples are clamped to zero when their total mass stays below
    ``clamp_tol``; larger negative mass raises.
    """
    from .density import DensityError, DensityField
    vals, imag = synthesize(spec, grid, return_imag=True)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if imag > IMAG_TOL * scale:
        raise SpectrumError(f"imaginary residue {imag:.3e} above {IMAG_TOL:g}")
    neg = np.minimum(vals, 0.0)
    neg_mass = -math.fsum(grid.weights * neg)
    if neg_mass > clamp_tol:
        raise DensityError(f"synthesized field has negative mass {neg_mass:.3e}")
    return DensityField(grid, np.maximum(vals, 0.0))


def spectral_convolve(s1: SO3Spectrum, s2: SO3Spectrum) -> SO3Spectrum:
    """Spectrum of s1's function convolved with s2's: block products f2_hat f1_hat."""
    if s1.L != s2.L:
        raise SpectrumError(f"bandwidth mismatch {s1.L} vs {s2.L}")
    return SO3Spectrum(tuple(b2 @ b1 for b1, b2 in zip(s1.blocks, s2.blocks)))


def shift_spectrum(spec: SO3Spectrum, mode: str, h=None) -> SO3Spectrum:
    """Spectrum after a left shift f(h^-1 g), right shift f(g h), conjugation f(h^-1 g h) or inversion."""
    if mode == "invert":
        return spec.map_blocks(lambda l, b: b.conj().T)
    U = wigner_D_all(spec.L, h)
    if mode == "left":
        return spec.map_blocks(lambda l, b: b @ U[l].conj().T)
    if mode == "right":
        return spec.map_blocks(lambda l, b: U[l] @ b)
    if mode == "conjugate":
        return spec.map_blocks(lambda l, b: U[l] @ b @ U[l].conj().T)
    raise SpectrumError(f"unknown shift mode {mode!r}")


def derivative_spectrum(spec: SO3Spectrum, i: int, side: str = "right") -> SO3Spectrum:
    """Right derivative maps to u_i f_hat, left derivative (f(exp(-tX) g)) to -f_hat u_i."""
    if side == "right":
        return spec.map_blocks(lambda l, b: u_matrices(l)[i] @ b)
    if side == "left":
        return spec.map_blocks(lambda l, b: -b @ u_matrices(l)[i])
    raise SpectrumError(f"side must be 'left' or 'right', got {side!r}")


# ---------------------------------------------------------------------------
# Dispersion measures


@dataclass(frozen=True)
class Dispersions:
    D2: float
    D: float
    tildeD: float
    B: int

    def as_tuple(self):
        return (self.D2, self.D, self.tildeD, self.B)


def live_blocks(spec: SO3Spectrum, threshold=BLOCK_THRESHOLD) -> np.ndarray:
    """Boolean mask of blocks whose Frobenius norm exceeds ``threshold``."""
    return spec.frobenius_norms() > threshold


def dispersions(spec: SO3Spectrum, threshold=BLOCK_THRESHOLD, support=None) -> Dispersions:
    """(D2, D, tildeD, B); logarithmic sums run over blocks with norm above ``threshold``.

    ``support`` (a boolean mask over l) restricts the sums further.  Comparing
    a convolution with its factors is only meaningful over a common block set,
    so pass ``live_blocks(product)`` there: a block can fall below the
    threshold in the product while staying above it in both factors.
    """
    fro = spec.frobenius_norms()
    two = spec.spectral_norms()
    live = fro > threshold
    if support is not None:
        support = np.asarray(support, dtype=bool)
        if support.shape != live.shape:
            raise SpectrumError(f"support mask must have length {spec.L + 1}")
        live = live & support
    dims = np.array([2 * l + 1 for l in range(spec.L + 1)], dtype=float)
    D2 = -math.fsum(dims[live] * np.log(two[live] ** 2))
    D = -math.fsum(dims[live] * np.log(fro[live] ** 2))
    tilde = -math.log(math.fsum(dims * fro ** 2))
    B = int(np.sum(dims[live]))
    return Dispersions(D2, D, tilde, B)


# ---------------------------------------------------------------------------
# Diffusion


@dataclass(frozen=True)
class DiffusionParams:
    D: np.ndarray = None
    h: np.ndarray = None
    t: float = 0.0

    def __post_init__(self):
        D = np.eye(3) if self.D is None else np.array(self.D, dtype=float)
        h = np.zeros(3) if self.h is None else np.array(self.h, dtype=float)
        if D.shape != (3, 3) or h.shape != (3,):
            raise SpectrumError("SO3 diffusion needs a 3x3 D and a 3-vector h")
        if np.max(np.abs(D - D.T)) > 1e-12:
            raise SpectrumError("diffusion matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(D)) < -1e-12:
            raise SpectrumError("diffusion matrix must be positive semidefinite")
        if not self.t >= 0:
            raise SpectrumError("time must be nonnegative")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "t", float(self.t))


def generator_block(l: int, D, h) -> np.ndarray:
    u = u_matrices(l)
    B = 0.5 * np.einsum("ij,iab,jbc->ac", D, u, u) - np.einsum("i,iab->ab", h, u)
    return B


def heat_propagator(params: DiffusionParams, L: int) -> SO3Spectrum:
    """Blocks exp(t B^l); the delta-initialized solution's spectrum."""
    return SO3Spectrum(tuple(expm(params.t * generator_block(l, params.D, params.h))
                             for l in range(L + 1)))


def _decay_rate(params: DiffusionParams) -> float:
    return max(float(np.min(np.linalg.eigvalsh(params.D))), 0.0)


def required_bandwidth(t: float, rate: float = 1.0, target=TRUNCATION_TARGET) -> int:
    """Smallest L with exp(-rate L(L+1) t / 2) < target."""
    if t <= 0 or rate <= 0:
        raise TruncationError("no finite bandwidth truncates a delta or a degenerate diffusion")
    need = 2.0 * -math.log(target) / (rate * t)
    L = 0
    while L * (L + 1) <= need:
        L += 1
    return L


def t_min(L: int, rate: float = 1.0, target=TRUNCATION_TARGET) -> float:
    if L == 0:
        return math.inf
    return 2.0 * -math.log(target) / (rate * L * (L + 1))


def heat_kernel(t: float, L: int | None = None, grid: Grid | None = None,
                params: DiffusionParams | None = None):
    """Heat kernel density rho_t on an SO3 grid.

    ``L`` defaults to the smallest safe bandwidth and ``grid`` to its standard
    Euler grid.  Raises TruncationError if ``L`` cannot resolve time ``t``.
    """
    params = DiffusionParams(t=t) if params is None else DiffusionParams(params.D, params.h, t)
    rate = _decay_rate(params)
    need = required_bandwidth(t, rate)
    if L is None:
        L = need
    elif L < need:
        raise TruncationError(f"t = {t:g} needs bandwidth >= {need} (got {L}); "
                              f"with L = {L} the minimum time is {t_min(L, rate):.4g}")
    if grid is None:
        grid = so3_grid(L)
    spec = heat_propagator(params, L)
    return so3_inverse(spec, grid)


def heat_spectrum(t: float, L: int, params: DiffusionParams | None = None) -> SO3Spectrum:
    params = DiffusionParams(t=t) if params is None else DiffusionParams(params.D, params.h, t)
    return heat_propagator(params, L)
