"""Exact discrete information theory on finite groups given by Cayley tables.

Elements are indexed 0..n-1 and ``table[i, j]`` is the index of ``g_i g_j``.
Cayley-table files hold the order on the first line followed by n rows of
0-based indices.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-12


class FiniteGroupError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteGroupTable:
    name: str
    table: np.ndarray
    labels: tuple = field(default=())
    chains: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.table, dtype=np.int64)
        n = t.shape[0]
        if t.shape != (n, n) or n == 0:
            raise FiniteGroupError("Cayley table must be a nonempty square")
        full = np.arange(n)
        for row in t:
            if not np.array_equal(np.sort(row), full):
                raise FiniteGroupError("Cayley table rows are not permutations")
        for col in t.T:
            if not np.array_equal(np.sort(col), full):
                raise FiniteGroupError("Cayley table columns are not permutations")
        ids = [e for e in range(n) if np.array_equal(t[e], full) and np.array_equal(t[:, e], full)]
        if not ids:
            raise FiniteGroupError("no identity element")
        # associativity: (ab)c = a(bc) for all triples
        if not self._associative(t):
            raise FiniteGroupError("Cayley table is not associative")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "labels", tuple(self.labels) or tuple(str(i) for i in range(n)))
        chains = {k: tuple(tuple(int(x) for x in s) for s in v) for k, v in dict(self.chains).items()}
        object.__setattr__(self, "chains", chains)
        for sub in itertools.chain.from_iterable(chains.values()):
            check_subgroup(self, sub)

    @staticmethod
    def _associative(t):
        # (a b) c  vs  a (b c)
        left = t[t[:, :, None], np.arange(t.shape[0])[None, None, :]]
        right = t[np.arange(t.shape[0])[:, None, None], t[None, :, :]]
        return np.array_equal(left, right)

    @property
    def order(self) -> int:
        return self.table.shape[0]

    @property
    def identity(self) -> int:
        full = np.arange(self.order)
        return int(next(e for e in range(self.order) if np.array_equal(self.table[e], full)))

    @property
    def inverse(self) -> np.ndarray:
        e = self.identity
        return np.argmax(self.table == e, axis=1)

    def mul(self, a, b):
        return self.table[a, b]


def check_subgroup(G: FiniteGroupTable, sub) -> tuple:
    sub = tuple(sorted(set(int(x) for x in sub)))
    if not sub or min(sub) < 0 or max(sub) >= G.order:
        raise FiniteGroupError("subgroup indices out of range")
    s = set(sub)
    if G.identity not in s:
        raise FiniteGroupError("subgroup misses the identity")
    inv = G.inverse
    for a in sub:
        if int(inv[a]) not in s:
            raise FiniteGroupError("subgroup is not closed under inverses")
        for b in sub:
            if int(G.table[a, b]) not in s:
                raise FiniteGroupError("subgroup is not closed under the product")
    return sub


def generated_subgroup(G: FiniteGroupTable, gens) -> tuple:
    elems = {G.identity}
    frontier = [G.identity]
    gens = [int(g) for g in gens]
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                c = int(G.table[a, g])
                if c not in elems:
                    elems.add(c)
                    nxt.append(c)
        frontier = nxt
    return tuple(sorted(elems))


# ---------------------------------------------------------------------------
# Built-in groups


def cyclic(n: int) -> FiniteGroupTable:
    idx = np.arange(n)
    table = (idx[:, None] + idx[None, :]) % n
    # subgroups of every order d | n, smallest first
    subs = tuple(tuple(range(0, n, n // d)) for d in range(1, n + 1) if n % d == 0)
    return FiniteGroupTable(f"Z{n}", table, tuple(str(i) for i in range(n)), {"subgroups": subs})


def _perm_table(perms):
    index = {p: i for i, p in enumerate(perms)}
    n = len(perms)
    table = np.empty((n, n), dtype=np.int64)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            table[i, j] = index[tuple(p[x] for x in q)]
    return table, index


def symmetric(k: int) -> FiniteGroupTable:
    """S_k on lexicographically ordered permutations, (p q)(x) = p[q[x]]."""
    perms = list(itertools.permutations(range(k)))
    table, index = _perm_table(perms)
    swap = list(range(k))
    swap[0], swap[1] = 1, 0
    H = tuple(sorted({index[tuple(range(k))], index[tuple(swap)]}))
    chains = {"transposition": (H,)}
    if k >= 4:  # for S3 the transposition group is the whole point stabilizer
        stab = tuple(sorted(index[p] for p in perms if p[k - 1] == k - 1))
        chains["nested"] = (H, stab)
    return FiniteGroupTable(f"S{k}", table, tuple("".join(map(str, p)) for p in perms), chains)


def dihedral4() -> FiniteGroupTable:
    """Symmetries of the square acting on vertices 0..3."""
    r, s = (1, 2, 3, 0), (0, 3, 2, 1)
    elems = {(0, 1, 2, 3)}
    frontier = list(elems)
    while frontier:
        nxt = []
        for p in frontier:
            for g in (r, s):
                c = tuple(p[x] for x in g)
                if c not in elems:
                    elems.add(c)
                    nxt.append(c)
        frontier = nxt
    perms = sorted(elems)
    table, index = _perm_table(perms)
    rot = tuple(sorted(index[p] for p in perms if p in {(0, 1, 2, 3), (1, 2, 3, 0), (2, 3, 0, 1), (3, 0, 1, 2)}))
    half = tuple(sorted({index[(0, 1, 2, 3)], index[(2, 3, 0, 1)]}))
    refl = tuple(sorted({index[(0, 1, 2, 3)], index[s]}))
    chains = {"rotations": (half, rot), "reflection": (refl,)}
    return FiniteGroupTable("D4", table, tuple("".join(map(str, p)) for p in perms), chains)


def quaternion8() -> FiniteGroupTable:
    """Q8 = {1, -1, i, -i, j, -j, k, -k}."""
    labels = ("1", "-1", "i", "-i", "j", "-j", "k", "-k")
    unit = {"1": (1, "1"), "i": (1, "i"), "j": (1, "j"), "k": (1, "k")}
    prod = {("1", x): (1, x) for x in "1ijk"}
    prod.update({(x, "1"): (1, x) for x in "1ijk"})
    prod.update({("i", "i"): (-1, "1"), ("j", "j"): (-1, "1"), ("k", "k"): (-1, "1"),
                 ("i", "j"): (1, "k"), ("j", "k"): (1, "i"), ("k", "i"): (1, "j"),
                 ("j", "i"): (-1, "k"), ("k", "j"): (-1, "i"), ("i", "k"): (-1, "j")})

    def parse(lbl):
        return (-1, lbl[1]) if lbl.startswith("-") else unit[lbl]

    index = {l: i for i, l in enumerate(labels)}
    table = np.empty((8, 8), dtype=np.int64)
    for a in labels:
        for b in labels:
            sa, ua = parse(a)
            sb, ub = parse(b)
            s, u = prod[(ua, ub)]
            lbl = u if sa * sb * s > 0 else "-" + u
            table[index[a], index[b]] = index[lbl]
    center = (index["1"], index["-1"])
    ci = tuple(sorted((index["1"], index["-1"], index["i"], index["-i"])))
    return FiniteGroupTable("Q8", table, labels, {"center": (tuple(sorted(center)), ci)})


def direct_product(G1: FiniteGroupTable, G2: FiniteGroupTable) -> FiniteGroupTable:
    """Element (a, b) has index a * |G2| + b."""
    n1, n2 = G1.order, G2.order
    a = np.arange(n1 * n2) // n2
    b = np.arange(n1 * n2) % n2
    table = G1.table[a[:, None], a[None, :]] * n2 + G2.table[b[:, None], b[None, :]]
    labels = tuple(f"({x},{y})" for x in G1.labels for y in G2.labels)
    e2 = G2.identity
    e1 = G1.identity
    first = tuple(sorted(int(x) * n2 + e2 for x in range(n1)))
    second = tuple(sorted(e1 * n2 + int(y) for y in range(n2)))
    return FiniteGroupTable(f"{G1.name}x{G2.name}", table, labels,
                            {"first_factor": (first,), "second_factor": (second,)})


BUILTIN = {
    "S3": lambda: symmetric(3),
    "S4": lambda: symmetric(4),
    "D4": dihedral4,
    "Q8": quaternion8,
}


def builtin(name: str) -> FiniteGroupTable:
    """Z<n>, S3, S4, D4, Q8 or a product such as Z3xZ4."""
    if "x" in name:
        parts = name.split("x")
        G = builtin(parts[0])
        for p in parts[1:]:
            G = direct_product(G, builtin(p))
        return G
    if name.startswith("Z") and name[1:].isdigit():
        return cyclic(int(name[1:]))
    if name in BUILTIN:
        return BUILTIN[name]()
    raise FiniteGroupError(f"unknown built-in group {name!r}")


def load_table(path, chains_path=None, name=None) -> FiniteGroupTable:
    with open(path) as fh:
        tokens = fh.read().split()
    if not tokens:
        raise FiniteGroupError("empty Cayley-table file")
    n = int(tokens[0])
    vals = [int(x) for x in tokens[1:]]
    if len(vals) != n * n:
        raise FiniteGroupError(f"expected {n * n} table entries, found {len(vals)}")
    chains = {}
    if chains_path is not None:
        with open(chains_path) as fh:
            data = json.load(fh)
        chains = {k: tuple(tuple(s) for s in v) for k, v in data.items()}
    return FiniteGroupTable(name or str(path), np.array(vals).reshape(n, n), (), chains)


def save_table(G: FiniteGroupTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{G.order}\n")
        for row in G.table:
            fh.write(" ".join(str(int(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# Densities


def as_density(G: FiniteGroupTable, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != G.order:
        raise FiniteGroupError(f"density has {p.shape[0]} entries, group order is {G.order}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise FiniteGroupError("densities must be finite and nonnegative")
    total = math.fsum(p)
    if abs(total - 1.0) > MASS_TOL:
        raise FiniteGroupError(f"density sums to {total!r}")
    return p


def delta(G: FiniteGroupTable, i=None) -> np.ndarray:
    p = np.zeros(G.order)
    p[G.identity if i is None else i] = 1.0
    return p


def uniform(G: FiniteGroupTable) -> np.ndarray:
    return np.full(G.order, 1.0 / G.order)


def random_density(G: FiniteGroupTable, rng, sparsity=0.0) -> np.ndarray:
    rng = np.random.default_rng(rng)
    p = rng.dirichlet(np.ones(G.order))
    if sparsity > 0:
        p[rng.random(G.order) < sparsity] = 0.0
        if p.sum() == 0:
            p[rng.integers(G.order)] = 1.0
    return p / math.fsum(p)


def fg_convolve(G: FiniteGroupTable, p1, p2) -> np.ndarray:
    """(p1 * p2)(g_i) = sum_j p1(g_j) p2(g_j^-1 g_i)."""
    p1, p2 = as_density(G, p1), as_density(G, p2)
    inv = G.inverse
    idx = G.table[inv[:, None], np.arange(G.order)[None, :]]  # [j, i] -> g_j^-1 g_i
    terms = p1[:, None] * p2[idx]
    return np.array([math.fsum(terms[:, i]) for i in range(G.order)])


def fg_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    pos = p > 0
    return -math.fsum(p[pos] * np.log(p[pos]))


# ---------------------------------------------------------------------------
# Marginals


def left_cosets(G: FiniteGroupTable, H) -> list:
    """Left cosets gH in order of their smallest element; each listed as (rep, members)."""
    H = check_subgroup(G, H)
    seen, out = set(), []
    for g in range(G.order):
        if g in seen:
            continue
        members = tuple(int(G.table[g, h]) for h in H)
        seen.update(members)
        out.append((g, members))
    return out


def coset_marginals(G: FiniteGroupTable, p, H):
    """(f_{G/H}, f_H) from g = r h with r the smallest element of gH."""
    p = as_density(G, p)
    H = check_subgroup(G, H)
    cos = left_cosets(G, H)
    f_gh = np.array([math.fsum(p[list(m)]) for _, m in cos])
    f_h = np.array([math.fsum(p[int(G.table[r, h])] for r, _ in cos) for h in H])
    return f_gh, f_h


def double_cosets(G: FiniteGroupTable, K, H) -> list:
    K, H = check_subgroup(G, K), check_subgroup(G, H)
    seen, out = set(), []
    for g in range(G.order):
        if g in seen:
            continue
        members = tuple(sorted({int(G.table[G.table[k, g], h]) for k in K for h in H}))
        seen.update(members)
        out.append((g, members))
    return out


def double_coset_marginals(G: FiniteGroupTable, p, K, H):
    """(f_K, f_{K\\G/H}, f_H) through g = k r h with the lexicographically smallest (k, h).

    The canonical choice makes g -> (k, KrH, h) injective, so the three marginals
    are those of a relabelled copy of p.
    """
    p = as_density(G, p)
    K, H = check_subgroup(G, K), check_subgroup(G, H)
    dcs = double_cosets(G, K, H)
    fk = np.zeros(len(K))
    fd = np.zeros(len(dcs))
    fh = np.zeros(len(H))
    for d, (r, members) in enumerate(dcs):
        mem = set(members)
        claimed = {}
        for ki, k in enumerate(K):
            for hi, h in enumerate(H):
                g = int(G.table[G.table[k, r], h])
                if g in mem and g not in claimed:
                    claimed[g] = (ki, hi)
        for g, (ki, hi) in claimed.items():
            fk[ki] += p[g]
            fd[d] += p[g]
            fh[hi] += p[g]
    return fk, fd, fh


def nested_marginals(G: FiniteGroupTable, p, H, K):
    """(f_{G/K}, f_{K/H}, f_H) for H < K < G through g = r s h."""
    p = as_density(G, p)
    H, K = check_subgroup(G, H), check_subgroup(G, K)
    if not set(H) <= set(K):
        raise FiniteGroupError("nested marginals need H inside K")
    outer = left_cosets(G, K)
    inner = []
    seen = set()
    for k in K:
        if k in seen:
            continue
        members = tuple(int(G.table[k, h]) for h in H)
        seen.update(members)
        inner.append(k)
    f_gk = np.zeros(len(outer))
    f_kh = np.zeros(len(inner))
    f_h = np.zeros(len(H))
    for a, (r, _) in enumerate(outer):
        for b, s in enumerate(inner):
            for c, h in enumerate(H):
                g = int(G.table[G.table[r, s], h])
                f_gk[a] += p[g]
                f_kh[b] += p[g]
                f_h[c] += p[g]
    return f_gk, f_kh, f_h


def product_marginals(G1: FiniteGroupTable, G2: FiniteGroupTable, p):
    """Factor marginals of a density on G1 x G2 (index a * |G2| + b)."""
    q = np.asarray(p, dtype=float).reshape(G1.order, G2.order)
    return q.sum(axis=1), q.sum(axis=0)


def fg_marginalize(G: FiniteGroupTable, p, kind: str, subgroups):
    """Dispatch on ``kind`` in {coset_GH, double_coset_KGH, nested_GKH}."""
    if kind == "coset_GH":
        (H,) = subgroups
        return coset_marginals(G, p, H)
    if kind == "double_coset_KGH":
        K, H = subgroups
        return double_coset_marginals(G, p, K, H)
    if kind == "nested_GKH":
        H, K = subgroups
        return nested_marginals(G, p, H, K)
    raise FiniteGroupError(f"unknown decomposition {kind!r}")


def shift_sum_residual(G: FiniteGroupTable, F, gamma: int) -> float:
    """|sum_g F(gamma^-1 g) - sum_g F(g)|."""
    F = np.asarray(F, dtype=float)
    shifted = F[G.table[G.inverse[gamma], np.arange(G.order)]]
    return abs(math.fsum(shifted) - math.fsum(F))
