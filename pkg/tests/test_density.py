import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieinfo import density as dn
from lieinfo import harmonic_so3 as hs
from lieinfo.group_core import euler_zxz_matrix, inverse_matrices, random_element
from lieinfo.quadrature import TruncationError, build_grid, integrate, product_grid, so3_grid

seeds = st.integers(0, 2 ** 32 - 1)


def _l1(a, b):
    return integrate(a.grid, np.abs(a.samples - b.samples))


def test_normalize(grid8, rng):
    two = dn.DensityField(grid8, np.full(grid8.size, 2.0))
    assert np.allclose(dn.normalize(two).samples, 1.0, atol=1e-14)
    one = dn.uniform(grid8)
    assert np.array_equal(dn.normalize(one).samples, one.samples)
    f = dn.normalize(dn.DensityField(grid8, rng.uniform(0.1, 3, grid8.size)))
    assert abs(f.mass - 1) < 1e-12


def test_rejects_bad_samples(grid8):
    with pytest.raises(dn.DensityError):
        dn.DensityField(grid8, -np.ones(grid8.size))
    with pytest.raises(dn.DensityError):
        dn.DensityField(grid8, np.ones(3))
    with pytest.raises(dn.DensityError):
        dn.normalize(dn.DensityField(grid8, np.zeros(grid8.size)))


def test_transform_basics(grid8, so3_pair):
    u = dn.uniform(grid8)
    assert np.allclose(dn.transform(u, "invert").samples, 1, atol=1e-12)
    h = random_element("SO3", np.random.default_rng(2))
    assert abs(dn.transform(so3_pair[0], "left", h).mass - 1) < 1e-12
    chi = dn.heat_kernel_density(grid8, 0.8)
    assert np.max(np.abs(dn.transform(chi, "conjugate", h).samples - chi.samples)) < 1e-8
    with pytest.raises(dn.DensityError):
        dn.transform(chi, "left")


def test_evaluate(grid8, so3_pair):
    f = so3_pair[0]
    k = 1234
    g = euler_zxz_matrix(grid8.nodes[k])
    assert dn.evaluate_matrices(f, g[None], "linear")[0] == pytest.approx(f.samples[k], abs=1e-12)
    h = random_element("SO3", np.random.default_rng(3))
    assert dn.evaluate(dn.uniform(grid8), h) == pytest.approx(1.0, abs=1e-12)


def test_linear_interpolation_is_second_order():
    rng = np.random.default_rng(11)
    coarse, fine = so3_grid(8), so3_grid(8, 34)
    spec = dn.random_bandlimited(coarse, rng).spectrum
    errs = []
    probe = np.stack([random_element("SO3", rng).mat for _ in range(200)])
    exact = hs.evaluate_spectrum(spec, np.array([dn.euler_zxz_angles(m) for m in probe])).real
    for grid in (coarse, fine):
        f = dn.from_spectrum(spec, grid)
        errs.append(np.max(np.abs(dn.evaluate_matrices(f, probe, "linear") - exact)))
        assert np.max(np.abs(dn.evaluate_matrices(f, probe, "spectral") - exact)) < 1e-10
    # halving the spacing cuts the error by about four
    assert errs[1] < errs[0] / 2.5


def test_convolution_with_uniform_and_near_delta(grid8, so3_pair):
    f = so3_pair[0]
    u = dn.convolve(dn.uniform(grid8), f)
    assert np.max(np.abs(u.samples - 1)) < 1e-12
    # the near-delta kernel is only representable spectrally; the deviation is
    # (t/2) |Laplacian f| to first order, so it is below 1e-3 for gently varying f
    t = 1e-3
    for kappa, absolute in ((0.3, 1e-3), (1.0, None)):
        f = dn.random_bandlimited(grid8, np.random.default_rng(7), kappa=kappa)
        near = hs.synthesize(hs.spectral_convolve(f.spectrum, hs.heat_spectrum(t, 8)), grid8)
        lap = hs.synthesize(hs.SO3Spectrum(tuple(-0.5 * l * (l + 1) * b for l, b in enumerate(f.spectrum.blocks))), grid8)
        dev = np.max(np.abs(near - f.samples))
        assert dev <= 1.01 * t * np.max(np.abs(lap))
        if absolute:
            assert dev < absolute


def test_noncommutativity_witness(grid8):
    a = dn.matrix_fisher(grid8, random_element("SO3", np.random.default_rng(1)), 2.0)
    b = dn.matrix_fisher(grid8, random_element("SO3", np.random.default_rng(2)), 2.0)
    assert _l1(dn.convolve(a, b), dn.convolve(b, a)) > 0.01


def test_equivalent_convolution_forms(grid8, so3_pair):
    f1, f2 = so3_pair
    c = dn.convolve(f1, f2, normalize_result=False)
    H = grid8.matrices()
    Hinv = inverse_matrices("SO3", H)
    w = grid8.weights
    ev = lambda f, m: dn.evaluate_matrices(f, m, "spectral")
    for k in (0, 777, 3001, 5000):
        g = H[k]
        forms = [
            math.fsum(w * ev(f1, H) * ev(f2, Hinv @ g)),
            math.fsum(w * ev(f1, g @ Hinv) * ev(f2, H)),
            math.fsum(w * ev(f1, g @ H) * ev(f2, Hinv)),
            math.fsum(w * ev(f1, Hinv) * ev(f2, H @ g)),
        ]
        assert max(abs(x - c.samples[k]) for x in forms) < 1e-8


def test_associativity_and_class_commutation(grid8, so3_pair):
    f1, f2 = so3_pair
    f3 = dn.random_bandlimited(grid8, np.random.default_rng(9))
    lhs = dn.convolve(dn.convolve(f1, f2), f3)
    rhs = dn.convolve(f1, dn.convolve(f2, f3))
    assert _l1(lhs, rhs) < 1e-6
    chi = dn.heat_kernel_density(grid8, 0.9)
    assert _l1(dn.convolve(f1, chi), dn.convolve(chi, f1)) < 1e-6


def test_shift_equivariance(grid8, so3_pair):
    r1, r2 = so3_pair
    rng = np.random.default_rng(5)
    g1, g2 = random_element("SO3", rng), random_element("SO3", rng)
    lhs = dn.convolve(dn.transform(r1, "left", g1), dn.transform(r2, "right", g2))
    mats = inverse_matrices("SO3", g1.mat) @ grid8.matrices() @ g2.mat
    rhs = dn.evaluate_matrices(dn.convolve(r1, r2), mats, "spectral")
    assert np.max(np.abs(lhs.samples - rhs)) < 1e-8


@settings(max_examples=8)
@given(seed=seeds)
def test_convolution_mass_property(seed):
    grid = so3_grid(4)
    rng = np.random.default_rng(seed)
    f1, f2 = dn.random_bandlimited(grid, rng), dn.random_bandlimited(grid, rng)
    _, mass = dn.convolve(f1, f2, return_mass=True)
    assert abs(mass - 1) < 1e-8


@settings(max_examples=10)
@given(seed=seeds, mode=st.sampled_from(["left", "right", "conjugate", "invert"]))
def test_transform_preserves_mass_and_entropy(seed, mode, grid8):
    from lieinfo.info_metrics import entropy
    grid = grid8
    rng = np.random.default_rng(seed)
    f = dn.random_bandlimited(grid, rng)
    g = dn.transform(f, mode, random_element("SO3", rng))
    assert abs(g.mass - 1) < 1e-12
    # entropy invariance is exact up to quadrature of f log f
    assert abs(entropy(g) - entropy(f)) < 1e-6


def test_se2_convolution_and_mass_escape():
    grid = build_grid("SE2", None, 16, 4.0)
    rng = np.random.default_rng(3)
    a = dn.random_smooth(grid, rng, 2, 1.0, width=0.68)
    b = dn.random_smooth(grid, rng, 2, 1.0, width=0.68)
    c = dn.convolve(a, b)
    assert abs(c.mass - 1) < 1e-12 and c.samples.min() >= 0
    narrow = dn.random_smooth(grid, rng, 2, 1.0, width=0.3)
    with pytest.raises(dn.MassEscapeError):
        dn.convolve(narrow, narrow)
    wide = dn.random_smooth(grid, rng, 2, 1.0, width=1.0)
    with pytest.raises(dn.MassEscapeError):
        dn.convolve(wide, wide)


def test_lie_derivative_basics(grid8, so3_pair):
    u = dn.uniform(grid8)
    assert np.max(np.abs(dn.lie_derivatives(u))) < 1e-12
    for f in so3_pair:
        for side in ("left", "right"):
            d = dn.lie_derivatives(f, side)
            assert max(abs(integrate(grid8, d[i])) for i in range(3)) < 1e-8
    g = build_grid("SO2", None, 64)
    th = g.nodes[:, 0]
    f = dn.DensityField(g, 1 + np.cos(th))
    assert np.max(np.abs(dn.lie_derivative(f, 0) + np.sin(th))) < 1e-5


def test_fd_and_spectral_derivatives_agree_on_fine_grid():
    rng = np.random.default_rng(1)
    grid = so3_grid(8, 40)
    f = dn.random_bandlimited(grid, rng)
    for side in ("right", "left"):
        fd = dn.lie_derivatives(f, side, method="fd")
        assert np.max(np.abs(fd - dn.lie_derivatives(f, side))) < 2e-2


def test_marginals(grid8, so3_pair):
    parts = dn.marginalize(dn.uniform(grid8), dn.DecompositionSpec("coset_GH"))
    assert all(np.allclose(m.samples, 1, atol=1e-12) for m in parts)
    for m in dn.marginalize(so3_pair[0], dn.DecompositionSpec("double_coset_KGH")):
        assert abs(m.mass - 1) < 1e-12
    pg = product_grid(build_grid("SO2", None, 16), build_grid("SO2", None, 12))
    a = 1 + 0.5 * np.cos(pg.factor_grids[0].nodes[:, 0])
    b = 1 + 0.3 * np.sin(2 * pg.factor_grids[1].nodes[:, 0])
    f = dn.DensityField(pg, np.outer(a, b).reshape(-1))
    m1, m2 = dn.marginalize(f, dn.DecompositionSpec("direct_product"))
    assert np.max(np.abs(m1.samples - a)) < 1e-10 and np.max(np.abs(m2.samples - b)) < 1e-10
    with pytest.raises(dn.DensityError):
        dn.DecompositionSpec("bogus")


def test_flags_are_verified(grid8, so3_pair):
    chi = dn.heat_kernel_density(grid8, 0.8)
    assert dn.verify_flags(chi).flags == chi.flags
    fake = dn.DensityField(grid8, so3_pair[0].samples, {"class_function"})
    assert dn.verify_flags(fake).flags == frozenset()
    s = dn.symmetrize(so3_pair[0])
    assert "symmetric" in s.flags and dn.symmetry_residual(s) < 1e-10


def test_gaussian_truncation_guard():
    grid = build_grid("R1", None, 64, 3.0)
    with pytest.raises(TruncationError):
        dn.gaussian(grid, 0.0, 1.0)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_io_round_trip(tmp_path, so3_pair, suffix):
    f = dn.DensityField(so3_pair[0].grid, so3_pair[0].samples, {"symmetric"})
    p = tmp_path / f"f{suffix}"
    dn.save(f, p)
    g = dn.load(p)
    assert g.grid.same_as(f.grid) and np.array_equal(g.samples, f.samples) and g.flags == f.flags
