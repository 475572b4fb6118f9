import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lieinfo import finite_group as fg

NAMES = ["Z5", "Z12", "S3", "S4", "D4", "Q8", "Z3xZ4"]
seeds = st.integers(0, 2 ** 32 - 1)


@pytest.mark.parametrize("name", NAMES)
def test_builtin_tables_are_groups(name):
    G = fg.builtin(name)
    assert G.table[G.identity, 3 % G.order] == 3 % G.order
    for a in range(G.order):
        assert G.table[a, G.inverse[a]] == G.identity


def test_orders():
    assert [fg.builtin(n).order for n in NAMES] == [5, 12, 6, 24, 8, 8, 12]


def test_entropy_values():
    assert abs(fg.fg_entropy(fg.delta(fg.builtin("S3")))) == 0
    assert abs(fg.fg_entropy(fg.uniform(fg.builtin("S3"))) - math.log(6)) < 1e-15
    assert abs(fg.fg_entropy([0.5, 0.25, 0.25]) - 1.5 * math.log(2)) < 1e-15
    assert abs(fg.fg_entropy([0.5, 0.25, 0.25]) - 1.039721) < 1e-6


def test_convolution_identities():
    G = fg.builtin("S4")
    p = fg.random_density(G, np.random.default_rng(0))
    assert np.allclose(fg.fg_convolve(G, p, fg.delta(G)), p, atol=1e-16)
    assert np.allclose(fg.fg_convolve(G, fg.uniform(G), p), 1 / 24, atol=1e-16)


def test_s3_transpositions_do_not_commute():
    G = fg.builtin("S3")
    a, b = fg.delta(G, 1), fg.delta(G, 2)
    assert not np.allclose(fg.fg_convolve(G, a, b), fg.fg_convolve(G, b, a))


def test_convolution_against_brute_force():
    G = fg.builtin("D4")
    rng = np.random.default_rng(1)
    p, q = fg.random_density(G, rng), fg.random_density(G, rng)
    brute = np.zeros(G.order)
    for h in range(G.order):
        for k in range(G.order):
            brute[G.table[h, k]] += p[h] * q[k]
    assert np.allclose(fg.fg_convolve(G, p, q), brute, atol=1e-16)


@pytest.mark.parametrize("name", ["Z5", "Z12", "S3", "D4", "Q8"])
@given(seed=seeds, sparse=st.booleans())
def test_two_sided_entropy_bound(name, seed, sparse):
    G = fg.builtin(name)
    rng = np.random.default_rng(seed)
    p1 = fg.random_density(G, rng, 0.5 if sparse else 0.0)
    p2 = fg.random_density(G, rng, 0.5 if sparse else 0.0)
    s1, s2 = fg.fg_entropy(p1), fg.fg_entropy(p2)
    s12 = fg.fg_entropy(fg.fg_convolve(G, p1, p2))
    assert max(s1, s2) - 1e-12 <= s12 <= s1 + s2 + 1e-12


@given(seed=seeds, gamma=st.integers(0, 23))
def test_shift_sum_invariance(seed, gamma):
    G = fg.builtin("S4")
    F = np.random.default_rng(seed).normal(size=G.order)
    assert fg.shift_sum_residual(G, F, gamma) < 1e-12


def test_uniform_marginals():
    G = fg.builtin("S4")
    H = G.chains["nested"][0]
    a, b = fg.coset_marginals(G, fg.uniform(G), H)
    assert np.allclose(a, 1 / len(a)) and np.allclose(b, 1 / len(b))
    assert abs(fg.fg_entropy(fg.uniform(G)) - fg.fg_entropy(a) - fg.fg_entropy(b)) < 1e-12


@given(seed=seeds)
def test_nested_cyclic_chain(seed):
    G = fg.builtin("Z8")
    p = fg.random_density(G, np.random.default_rng(seed))
    parts = fg.nested_marginals(G, p, (0, 4), (0, 2, 4, 6))
    assert all(abs(math.fsum(m) - 1) < 1e-12 for m in parts)
    assert fg.fg_entropy(p) <= math.fsum(fg.fg_entropy(m) for m in parts) + 1e-12


@given(seed=seeds)
def test_s3_coset(seed):
    G = fg.builtin("S3")
    H = G.chains["transposition"][0]
    p = fg.random_density(G, np.random.default_rng(seed))
    a, b = fg.coset_marginals(G, p, H)
    assert fg.fg_entropy(p) <= fg.fg_entropy(a) + fg.fg_entropy(b) + 1e-12


@given(seed=seeds)
def test_double_coset(seed):
    G = fg.builtin("S4")
    K, H = G.chains["transposition"][0], G.chains["nested"][1]
    p = fg.random_density(G, np.random.default_rng(seed))
    parts = fg.double_coset_marginals(G, p, K, H)
    assert all(abs(math.fsum(m) - 1) < 1e-12 for m in parts)
    assert fg.fg_entropy(p) <= math.fsum(fg.fg_entropy(m) for m in parts) + 1e-12


def test_direct_product_equality_iff_factorizes():
    G1, G2 = fg.builtin("Z3"), fg.builtin("Z4")
    G = fg.direct_product(G1, G2)
    rng = np.random.default_rng(2)
    q1, q2 = fg.random_density(G1, rng), fg.random_density(G2, rng)
    p = np.outer(q1, q2).reshape(-1)
    m1, m2 = fg.product_marginals(G1, G2, p)
    assert abs(fg.fg_entropy(p) - fg.fg_entropy(m1) - fg.fg_entropy(m2)) < 1e-12
    p = fg.random_density(G, rng)
    m1, m2 = fg.product_marginals(G1, G2, p)
    assert fg.fg_entropy(p) < fg.fg_entropy(m1) + fg.fg_entropy(m2) - 1e-6


def test_table_file_round_trip(tmp_path):
    G = fg.builtin("Q8")
    path = tmp_path / "q8.txt"
    fg.save_table(G, path)
    chains = tmp_path / "chains.json"
    chains.write_text(json.dumps({"center": [list(map(int, s)) for s in G.chains["center"]]}))
    H = fg.load_table(path, chains, "Q8")
    assert np.array_equal(H.table, G.table) and H.chains["center"] == G.chains["center"]


def test_invalid_tables(tmp_path):
    with pytest.raises(fg.FiniteGroupError):
        fg.FiniteGroupTable("bad", np.array([[0, 1], [0, 1]]))
    with pytest.raises(fg.FiniteGroupError):
        fg.check_subgroup(fg.builtin("S3"), [0, 3])
    path = tmp_path / "t.txt"
    path.write_text("2\n0 1 1")
    with pytest.raises(fg.FiniteGroupError):
        fg.load_table(path)
    with pytest.raises(fg.FiniteGroupError):
        fg.as_density(fg.builtin("Z3"), [0.5, 0.5])
