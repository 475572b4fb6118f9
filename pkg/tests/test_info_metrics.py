import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieinfo import density as dn
from lieinfo import info_metrics as im
from lieinfo.group_core import random_element
from lieinfo.quadrature import build_grid, so3_grid

seeds = st.integers(0, 2 ** 32 - 1)

# Frozen oracles from one-dimensional class-function integrals over the rotation
# angle (measure (1 - cos theta)/pi d theta, scipy adaptive quadrature).
HEAT_ENTROPY = {0.8: -0.7548387147862547, 0.5: -1.3383304159621234, 1.0: -0.5166758008811043}
HEAT_FISHER_TRACE = {0.8: 2.8553961473667293, 1.0: 1.9645169762480883}


def test_uniform_entropy_and_power(grid8):
    u = dn.uniform(grid8)
    assert abs(im.entropy(u)) < 1e-15
    assert abs(im.entropy_power(u) - 1) < 1e-15


def test_gaussian_on_the_line():
    grid = build_grid("R1", None, 96, 10.0)
    f = dn.gaussian(grid, 0.0, 1.0)
    assert abs(im.entropy(f) - 0.5 * math.log(2 * math.pi * math.e)) < 1e-12
    assert abs(im.entropy(f) - 1.418939) < 1e-6
    assert abs(im.entropy_power(f) - 1) < 1e-12
    assert abs(im.fisher_matrix(f).trace - 1) < 1e-10


@pytest.mark.parametrize("t", sorted(HEAT_ENTROPY))
def test_heat_kernel_entropy_oracle(t):
    from lieinfo.harmonic_so3 import required_bandwidth
    f = dn.heat_kernel_density(so3_grid(required_bandwidth(t)), t)
    assert abs(im.entropy(f) - HEAT_ENTROPY[t]) < 1e-6


@pytest.mark.parametrize("t", sorted(HEAT_FISHER_TRACE))
def test_heat_kernel_fisher_oracle(t):
    fine = im.fisher_matrix(dn.heat_kernel_density(so3_grid(8, 34), t))
    assert abs(fine.trace - HEAT_FISHER_TRACE[t]) < 1e-6
    assert np.allclose(fine.matrix, fine.trace / 3 * np.eye(3), atol=1e-6)
    coarse = im.fisher_matrix(dn.heat_kernel_density(so3_grid(8), t))
    assert abs(coarse.trace - HEAT_FISHER_TRACE[t]) < 1e-4


def test_entropy_and_power_increase_along_heat_flow():
    from lieinfo.harmonic_so3 import required_bandwidth
    grid = so3_grid(required_bandwidth(0.2))
    S = [im.entropy(dn.heat_kernel_density(grid, t)) for t in (0.2, 0.4, 0.8)]
    N = [im.entropy_power(dn.heat_kernel_density(grid, t)) for t in (0.2, 0.4, 0.8)]
    assert S[0] < S[1] < S[2] < 0
    assert N[0] < N[1] < N[2] < 1


def test_kl_basics(grid8, so3_pair):
    f1, f2 = so3_pair
    assert abs(im.kl_divergence(f1, f1)) < 1e-15
    assert abs(im.kl_divergence(f1, dn.uniform(grid8)) + im.entropy(f1)) < 1e-10
    assert im.kl_divergence(f1, f2) > 0


@settings(max_examples=100)
@given(seed=seeds)
def test_kl_nonnegative(seed):
    grid = so3_grid(3)
    rng = np.random.default_rng(seed)
    f1, f2 = dn.random_bandlimited(grid, rng), dn.random_bandlimited(grid, rng)
    assert im.kl_divergence(f1, f2) >= -1e-12


def test_kl_support_error(grid8, so3_pair):
    spike = dn.DensityField(grid8, np.where(np.arange(grid8.size) == 5, 1.0, 0.0))
    with pytest.raises(im.MetricError):
        im.kl_divergence(so3_pair[0], dn.normalize(spike))


def test_fisher_uniform_symmetric_and_trace(grid8, so3_pair):
    assert np.max(np.abs(im.fisher_matrix(dn.uniform(grid8)).matrix)) < 1e-20
    s = dn.symmetrize(so3_pair[0])
    assert np.max(np.abs(im.fisher_matrix(s).matrix - im.fisher_matrix(s, "left").matrix)) < 1e-6
    for f in so3_pair:
        assert abs(im.fisher_matrix(f).trace - im.fisher_matrix(f, "left").trace) < 1e-6


def test_basis_change(so3_pair, rng):
    f = so3_pair[0]
    F = im.fisher_matrix(f)
    assert np.array_equal(im.fisher_basis_change(F, np.eye(3)).matrix, F.matrix)
    A = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    G = im.fisher_basis_change(F, A)
    assert abs(G.trace - F.trace) < 1e-12
    dy = A @ dn.lie_derivatives(f)
    direct = np.einsum("n,in,jn->ij", f.weights, dy, dy / f.samples)
    assert np.max(np.abs(G.matrix - direct)) < 1e-6
    with pytest.raises(im.MetricError):
        im.fisher_basis_change(F, 2 * np.eye(3))


def test_fisher_distance(grid8, so3_pair):
    f1, f2 = so3_pair
    assert abs(im.fisher_distance(f1, f1)) < 1e-20
    assert abs(im.fisher_distance(f1, dn.uniform(grid8)) - im.fisher_matrix(f1).trace) < 1e-6
    assert im.fisher_distance(f1, f2) >= 0


@settings(max_examples=6)
@given(seed=seeds)
def test_fisher_shift_and_inversion_invariance(seed, grid8):
    rng = np.random.default_rng(seed)
    f = dn.random_bandlimited(grid8, rng)
    h = random_element("SO3", rng)
    Fr, Fl = im.fisher_matrix(f).matrix, im.fisher_matrix(f, "left").matrix
    assert np.max(np.abs(im.fisher_matrix(dn.transform(f, "left", h)).matrix - Fr)) < 1e-6
    assert np.max(np.abs(im.fisher_matrix(dn.transform(f, "right", h), "left").matrix - Fl)) < 1e-6
    assert np.max(np.abs(im.fisher_matrix(dn.transform(f, "invert")).matrix - Fl)) < 1e-6


@settings(max_examples=4)
@given(seed=seeds)
def test_fisher_convolution_bounds(seed, grid8):
    rng = np.random.default_rng(seed)
    f1, f2 = dn.random_bandlimited(grid8, rng), dn.random_bandlimited(grid8, rng)
    c = dn.convolve(f1, f2)
    R12, R2 = im.fisher_matrix(c), im.fisher_matrix(f2)
    L12, L1 = im.fisher_matrix(c, "left"), im.fisher_matrix(f1, "left")
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        P = A @ A.T
        assert R12.weighted_trace(P) <= R2.weighted_trace(P) + 1e-6
        assert L12.weighted_trace(P) <= L1.weighted_trace(P) + 1e-6


def test_reciprocal_bound_for_heat_kernels(grid8):
    a, b = dn.heat_kernel_density(grid8, 0.8), dn.heat_kernel_density(grid8, 1.2)
    c = dn.convolve(a, b)
    Fa, Fb, Fc = (im.fisher_matrix(x) for x in (a, b, c))
    P = np.diag([1.0, 2.0, 0.5])
    assert 1 / Fc.weighted_trace(P) >= 1 / Fa.weighted_trace(P) + 1 / Fb.weighted_trace(P) - 1e-6


def test_entropy_zero_log_zero(grid8):
    f = np.zeros(grid8.size)
    f[:grid8.size // 2] = 2.0
    assert math.isfinite(im.entropy(dn.normalize(dn.DensityField(grid8, f))))


def test_fisher_matrix_validation():
    with pytest.raises(im.MetricError):
        im.FisherMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]), "right")
    with pytest.raises(im.MetricError):
        im.FisherMatrix(-np.eye(2), "right")


def test_floor_warning():
    grid = so3_grid(8)
    x = np.cos(grid.nodes[:, 1])
    f = dn.normalize(dn.DensityField(grid, np.maximum(x, 0) ** 4))
    F = im.fisher_matrix(f, method="fd")
    # half the nodes sit at zero; they carry no mass so no warning is due
    assert F.floor_mass == 0 and F.warnings == ()
    assert np.all(np.isfinite(F.matrix))
