"""Theorem-verification suite: configuration, registered checks and reports.

Every check returns a :class:`SectionReport` whose records carry both sides
of the relation checked.  ``kind`` is ``"inequality"`` (pass iff
``slack >= -tolerance``), ``"equality"`` (pass iff ``|lhs - rhs| <= tolerance``)
or ``"report"`` (recorded, not asserted).
"""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import datetime
import io
import json
import math
import os
import traceback
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import density as dn
from . import finite_group as fg
from . import harmonic_so3 as hs
from . import info_metrics as im
from .group_core import GroupId, inverse_matrices, random_element
from .quadrature import build_grid, integrate, product_grid, so3_grid

REPORT_SCHEMA = "lieinfo.report/1"


@dataclass
class Tolerances:
    equality: float = 1e-5
    inequality: float = 1e-6
    finite: float = 1e-12
    spectral: float = 1e-8
    plancherel: float = 1e-9
    fisher: float = 1e-6
    marginal: float = 1e-5
    witness: float = 1e-3
    debruijn_iso: float = 1e-3
    debruijn_aniso: float = 5e-3
    log_sobolev: float = 1e-5
    epi_margin: float = 0.05


@dataclass
class SuiteConfig:
    seed: int
    group: str = "SO3"
    bandwidth: int = 8
    resolution: int | None = None
    truncation: float = 4.0
    degree: int = 2
    kappa: float = 1.0
    pairs: int = 50
    densities: int = 20
    finite_pairs: int = 1000
    select: list | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a random seed is mandatory")
        self.seed = int(self.seed)
        if isinstance(self.tolerances, dict):
            self.tolerances = Tolerances(**self.tolerances)
        if self.select is not None:
            unknown = [s for s in self.select if s not in REGISTRY]
            if unknown:
                raise ValueError(f"unknown theorem ids {unknown}; known: {list(REGISTRY)}")
        if self.group not in ("SO3", "SO2", "SE2", "H1"):
            raise ValueError(f"group must be SO3, SO2, SE2 or H1, got {self.group!r}")

    @property
    def so3_resolution(self) -> int:
        return 2 * self.bandwidth + 2 if self.resolution is None else int(self.resolution)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "SuiteConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(SuiteConfig)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        if "seed" not in data:
            raise ValueError("a random seed is mandatory")
        return SuiteConfig(**data)

    @staticmethod
    def from_file(path) -> "SuiteConfig":
        path = str(path)
        if path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path) as fh:
                data = json.load(fh)
        return SuiteConfig.from_dict(data)


@dataclass
class Record:
    label: str
    kind: str
    lhs: float
    rhs: float
    tolerance: float
    slack: float = 0.0
    passed: bool | None = None

    def __post_init__(self):
        self.lhs, self.rhs = float(self.lhs), float(self.rhs)
        if self.kind == "inequality":
            self.slack = self.rhs - self.lhs
            self.passed = bool(self.slack >= -self.tolerance)
        elif self.kind == "equality":
            self.slack = abs(self.lhs - self.rhs)
            self.passed = bool(self.slack <= self.tolerance)
        elif self.kind == "report":
            self.slack = self.rhs - self.lhs
            self.passed = None
        else:
            raise ValueError(f"unknown record kind {self.kind!r}")
        if not (math.isfinite(self.lhs) and math.isfinite(self.rhs)) and self.kind != "report":
            self.passed = False

    def as_dict(self):
        return {"label": self.label, "kind": self.kind, "lhs": _num(self.lhs), "rhs": _num(self.rhs),
                "slack": _num(self.slack), "tolerance": self.tolerance, "pass": self.passed}


def _num(x):
    return float(x) if math.isfinite(x) else None


@dataclass
class SectionReport:
    theorem: str
    title: str
    records: list = field(default_factory=list)
    fingerprint: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None

    def le(self, label, lhs, rhs, tol):
        """Record lhs <= rhs."""
        self.records.append(Record(label, "inequality", lhs, rhs, tol))

    def eq(self, label, lhs, rhs, tol):
        self.records.append(Record(label, "equality", lhs, rhs, tol))

    def note(self, label, lhs, rhs=0.0):
        self.records.append(Record(label, "report", lhs, rhs, 0.0))

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(r.passed is not False for r in self.records)

    def counts(self):
        asserted = [r for r in self.records if r.passed is not None]
        return len(asserted), sum(1 for r in asserted if r.passed)

    def as_dict(self):
        return {"theorem": self.theorem, "title": self.title, "status": self.status,
                "error": self.error, "passed": self.passed, "fingerprint": self.fingerprint,
                "records": [r.as_dict() for r in self.records]}


# ---------------------------------------------------------------------------
# shared helpers


def _rng(cfg: SuiteConfig, section: str):
    return np.random.default_rng([cfg.seed, zlib.crc32(section.encode())])


def _so3(cfg, L=None):
    L = cfg.bandwidth if L is None else L
    if L == cfg.bandwidth:
        return so3_grid(L, cfg.so3_resolution)
    return so3_grid(L)


def _fingerprint(cfg, grid, **extra):
    fp = {"seed": cfg.seed, "resolution": list(grid.resolution), "group": grid.group.value}
    if grid.bandwidth_capacity >= 0:
        fp["L"] = grid.bandwidth_capacity
    fp.update(extra)
    return fp


def _random(cfg, grid, rng):
    return dn.random_bandlimited(grid, rng, cfg.degree, cfg.kappa)


def _l1(grid, a, b):
    return integrate(grid, np.abs(a.samples - b.samples))


def _random_psd(rng, n=3):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


def _heat_time_for(L):
    """Smallest round time the bandwidth resolves."""
    return math.ceil(hs.t_min(L) * 10) / 10


# ---------------------------------------------------------------------------
# checks


def check_entropy_convolution(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.1", "Convolution does not decrease entropy")
    rng = _rng(cfg, "3.1")
    tol = cfg.tolerances.inequality
    if cfg.group == "SO3":
        grid = _so3(cfg)
        make = lambda: _random(cfg, grid, rng)
    elif cfg.group == "SO2":
        grid = build_grid("SO2", None, 64)
        make = lambda: dn.random_smooth(grid, rng, cfg.degree + 1, cfg.kappa)
    else:
        grid = build_grid(cfg.group, None, 16, cfg.truncation)
        # narrower is under-resolved at 16 nodes per axis, wider leaks through the box
        make = lambda: dn.random_smooth(grid, rng, cfg.degree, cfg.kappa, width=0.17 * cfg.truncation)
    rep.fingerprint = _fingerprint(cfg, grid)
    uni = dn.uniform(grid)
    if grid.group.compact:
        f = make()
        u = dn.convolve(f, uni)
        rep.eq("uniform: S(f * uniform) = S(uniform)", im.entropy(u), im.entropy(uni),
               cfg.tolerances.equality)
    for k in range(cfg.pairs if grid.group is GroupId.SO3 else min(cfg.pairs, 8)):
        f1, f2 = make(), make()
        c, mass = dn.convolve(f1, f2, return_mass=True)
        s1, s2, s12 = im.entropy(f1), im.entropy(f2), im.entropy(c)
        rep.le(f"pair {k}: max(S1, S2) <= S(f1 * f2)", max(s1, s2), s12, tol)
        if grid.group.compact:
            rep.eq(f"pair {k}: mass of f1 * f2 before renormalising", mass, 1.0, 1e-8)
    # n-fold chain
    f = make()
    chain = f
    prev = im.entropy(chain)
    for n in range(2, 6):
        chain = dn.convolve(chain, f)
        s = im.entropy(chain)
        rep.le(f"chain: S(f_{n - 1}) <= S(f_{n})", prev, s, tol)
        prev = s
    if grid.group.compact:
        rep.note("chain: S(f_5) (tends to 0)", prev, 0.0)
    return rep


def check_dispersions(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.2", "Spectral dispersion measures and Plancherel")
    rng = _rng(cfg, "3.2")
    grid = _so3(cfg)
    rep.fingerprint = _fingerprint(cfg, grid)
    tol = cfg.tolerances.spectral
    dens = [_random(cfg, grid, rng) for _ in range(cfg.densities)]
    dens.append(dn.heat_kernel_density(grid, _heat_time_for(grid.bandwidth_capacity)))
    for k, f in enumerate(dens):
        lhs = integrate(grid, f.samples ** 2)
        rhs = f.spectrum.l2_norm_sq()
        rep.eq(f"density {k}: Plancherel relative gap", abs(lhs - rhs) / rhs, 0.0,
               cfg.tolerances.plancherel)
    for k in range(0, len(dens) - 1, 2):
        f1, f2 = dens[k], dens[k + 1]
        c = dn.convolve(f1, f2)
        cs = dn.convolve(f1, f2, method="spectral")
        rep.eq(f"pair {k // 2}: L1 gap spectral vs direct convolution", _l1(grid, c, cs), 0.0,
               cfg.tolerances.fisher)
        prod = hs.spectral_convolve(f1.spectrum, f2.spectrum)
        live = hs.live_blocks(prod)
        d1, d2, d12 = (hs.dispersions(s, support=live) for s in (f1.spectrum, f2.spectrum, prod))
        rep.le(f"pair {k // 2}: D(f1) + D(f2) <= D(f1 * f2)", d1.D + d2.D, d12.D, tol)
        rep.le(f"pair {k // 2}: D2(f1) + D2(f2) <= D2(f1 * f2)", d1.D2 + d2.D2, d12.D2, tol)
        rep.note(f"pair {k // 2}: B(f1 * f2)", d12.B, 0.0)
    for k, f in enumerate(dens):
        d = hs.dispersions(f.spectrum)
        rep.le(f"density {k}: D <= D2", d.D, d.D2, tol)
        rep.le(f"density {k}: tildeD <= S", d.tildeD, im.entropy(f), cfg.tolerances.equality)
    d = hs.dispersions(dn.uniform(grid).spectrum)
    rep.eq("uniform: tildeD = 0", d.tildeD, 0.0, tol)
    return rep


def _finite_groups():
    return [fg.builtin(n) for n in ("Z5", "Z12", "S3", "S4", "D4", "Q8")]


def check_finite_convolution(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.3", "Finite groups: max(S1, S2) <= S(p1 * p2) <= S1 + S2")
    rng = _rng(cfg, "3.3")
    groups = _finite_groups()
    rep.fingerprint = {"seed": cfg.seed, "groups": [G.name for G in groups]}
    tol = cfg.tolerances.finite
    counts = [cfg.finite_pairs // len(groups) + (i < cfg.finite_pairs % len(groups)) for i in range(len(groups))]
    rep.note("pairs checked", float(sum(counts)), float(cfg.finite_pairs))
    for G, per in zip(groups, counts):
        if per == 0:
            continue
        lo_worst, hi_worst = math.inf, math.inf
        for k in range(per):
            sparsity = 0.0 if k % 2 == 0 else 0.5
            p1, p2 = fg.random_density(G, rng, sparsity), fg.random_density(G, rng, sparsity)
            s1, s2, s12 = fg.fg_entropy(p1), fg.fg_entropy(p2), fg.fg_entropy(fg.fg_convolve(G, p1, p2))
            lo, hi = (max(s1, s2), s12), (s12, s1 + s2)
            if s12 - max(s1, s2) < lo_worst:
                lo_worst, lo_pair = s12 - max(s1, s2), lo
            if s1 + s2 - s12 < hi_worst:
                hi_worst, hi_pair = s1 + s2 - s12, hi
            if not (s12 - max(s1, s2) >= -tol and s1 + s2 - s12 >= -tol):
                rep.le(f"{G.name} pair {k}: lower bound", max(s1, s2), s12, tol)
                rep.le(f"{G.name} pair {k}: upper bound", s12, s1 + s2, tol)
        rep.le(f"{G.name}: worst lower bound over {per} pairs", *lo_pair, tol)
        rep.le(f"{G.name}: worst upper bound over {per} pairs", *hi_pair, tol)
        F = rng.normal(size=G.order)
        rep.eq(f"{G.name}: shift invariance of sums", fg.shift_sum_residual(G, F, G.order - 1), 0.0, tol)
    return rep


def _so3_marginal_checks(cfg, rep, rng, kind):
    grid = _so3(cfg)
    tol = cfg.tolerances.marginal
    spec = dn.DecompositionSpec(kind)
    for k in range(cfg.densities):
        f = _random(cfg, grid, rng)
        parts = dn.marginalize(f, spec)
        rep.le(f"SO3 density {k}: S(f) <= sum of marginal entropies",
               im.entropy(f), math.fsum(im.entropy(m) for m in parts), tol)
    parts = dn.marginalize(dn.uniform(grid), spec)
    rep.eq("SO3 uniform: marginal entropies vanish", math.fsum(abs(im.entropy(m)) for m in parts), 0.0, tol)
    return grid


def check_coset(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.4", "Subgroup and coset-space marginals (and direct products)")
    rng = _rng(cfg, "3.4")
    grid = _so3_marginal_checks(cfg, rep, rng, "coset_GH")
    rep.fingerprint = _fingerprint(cfg, grid)
    tol = cfg.tolerances.finite
    cases = [("S3", "transposition", 0), ("S4", "nested", 1), ("D4", "rotations", 0),
             ("D4", "reflection", 0), ("Q8", "center", 1), ("Z12", "subgroups", 3)]
    for name, chain, idx in cases:
        G = fg.builtin(name)
        H = G.chains[chain][idx]
        for k in range(5):
            p = fg.random_density(G, rng, 0.3 if k % 2 else 0.0)
            a, b = fg.coset_marginals(G, p, H)
            rep.le(f"{name} H={list(H)} density {k}", fg.fg_entropy(p), fg.fg_entropy(a) + fg.fg_entropy(b), tol)
    # direct products
    pg = product_grid(build_grid("SO2", None, 32), build_grid("SO2", None, 32))
    x = pg.nodes
    for k in range(5):
        c = rng.normal(size=4)
        f = dn.normalize(dn.DensityField(pg, np.exp(cfg.kappa * (c[0] * np.cos(x[:, 0]) + c[1] * np.sin(x[:, 1])
                                                              + c[2] * np.cos(x[:, 0] - x[:, 1])
                                                              + c[3] * np.sin(x[:, 0] + 2 * x[:, 1])))))
        f1, f2 = dn.marginalize(f, dn.DecompositionSpec("direct_product"))
        rep.le(f"SO2xSO2 density {k}: S12 <= S1 + S2", im.entropy(f), im.entropy(f1) + im.entropy(f2),
               cfg.tolerances.inequality)
    a = np.exp(np.cos(x[:, 0]))
    b = np.exp(0.5 * np.sin(2 * x[:, 1]))
    f = dn.normalize(dn.DensityField(pg, a * b))
    f1, f2 = dn.marginalize(f, dn.DecompositionSpec("direct_product"))
    rep.eq("SO2xSO2 product density: S12 = S1 + S2", im.entropy(f), im.entropy(f1) + im.entropy(f2), 1e-10)
    G1, G2 = fg.builtin("Z3"), fg.builtin("Z4")
    G = fg.direct_product(G1, G2)
    for k in range(5):
        p = fg.random_density(G, rng)
        m1, m2 = fg.product_marginals(G1, G2, p)
        rep.le(f"Z3xZ4 density {k}: S12 <= S1 + S2", fg.fg_entropy(p), fg.fg_entropy(m1) + fg.fg_entropy(m2), tol)
    q1, q2 = fg.random_density(G1, rng), fg.random_density(G2, rng)
    p = np.outer(q1, q2).reshape(-1)
    p = p / math.fsum(p)
    m1, m2 = fg.product_marginals(G1, G2, p)
    rep.eq("Z3xZ4 product density: S12 = S1 + S2", fg.fg_entropy(p), fg.fg_entropy(m1) + fg.fg_entropy(m2), tol)
    return rep


def check_double_coset(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.5", "Double-coset marginals")
    rng = _rng(cfg, "3.5")
    grid = _so3_marginal_checks(cfg, rep, rng, "double_coset_KGH")
    rep.fingerprint = _fingerprint(cfg, grid)
    tol = cfg.tolerances.finite
    cases = [("S3", ("transposition", 0), ("transposition", 0)),
             ("S4", ("transposition", 0), ("nested", 1)),
             ("D4", ("reflection", 0), ("rotations", 0)),
             ("Q8", ("center", 1), ("center", 0))]
    for name, (ck, ik), (ch, ih) in cases:
        G = fg.builtin(name)
        K, H = G.chains[ck][ik], G.chains[ch][ih]
        for k in range(5):
            p = fg.random_density(G, rng, 0.3 if k % 2 else 0.0)
            parts = fg.double_coset_marginals(G, p, K, H)
            rep.le(f"{name} K={list(K)} H={list(H)} density {k}", fg.fg_entropy(p),
                   math.fsum(fg.fg_entropy(m) for m in parts), tol)
    return rep


def check_nested(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.6", "Nested coset marginals (finite groups)")
    rng = _rng(cfg, "3.6")
    rep.fingerprint = {"seed": cfg.seed}
    tol = cfg.tolerances.finite
    cases = [("Z8", (0, 4), (0, 2, 4, 6)), ("Z12", (0, 6), (0, 2, 4, 6, 8, 10))]
    for name, chain in (("S4", "nested"), ("D4", "rotations"), ("Q8", "center")):
        G = fg.builtin(name)
        cases.append((name, *G.chains[chain]))
    for name, H, K in cases:
        G = fg.builtin(name)
        for k in range(5):
            p = fg.random_density(G, rng, 0.3 if k % 2 else 0.0)
            parts = fg.nested_marginals(G, p, H, K)
            rep.le(f"{name} H={list(H)} < K={list(K)} density {k}", fg.fg_entropy(p),
                   math.fsum(fg.fg_entropy(m) for m in parts), tol)
        u = fg.uniform(G)
        parts = fg.nested_marginals(G, u, H, K)
        rep.eq(f"{name} uniform: equality", fg.fg_entropy(u), math.fsum(fg.fg_entropy(m) for m in parts), tol)
    return rep


def check_entropy_equalities(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("3.7-3.9", "Inequivalent convolutions with equal entropy")
    rng = _rng(cfg, "3.7-3.9")
    grid = _so3(cfg)
    rep.fingerprint = _fingerprint(cfg, grid)
    tol, wtol = cfg.tolerances.equality, cfg.tolerances.witness
    conv = dn.convolve
    T = lambda f, mode, h=None: dn.transform(f, mode, h)
    for k in range(3):
        r1, r2 = _random(cfg, grid, rng), _random(cfg, grid, rng)
        g1, g2 = random_element("SO3", rng), random_element("SO3", rng)
        base = conv(r1, r2)
        s = im.entropy(base)
        variants = {
            "rho2v * rho1v": conv(T(r2, "invert"), T(r1, "invert")),
            "L_g1 rho1 * R_g2 rho2": conv(T(r1, "left", g1), T(r2, "right", g2)),
            "C_g1 rho1 * C_g1 rho2": conv(T(r1, "conjugate", g1), T(r2, "conjugate", g1)),
            "L_g1 rho2v * R_g2 rho1v": conv(T(T(r2, "invert"), "left", g1), T(T(r1, "invert"), "right", g2)),
        }
        for name, v in variants.items():
            rep.eq(f"3.7 pair {k}: S(rho1 * rho2) = S({name})", s, im.entropy(v), tol)
            rep.le(f"3.7 pair {k}: ||rho1 * rho2 - {name}||_1 exceeds witness threshold",
                   wtol, _l1(grid, base, v), 0.0)
        # the shift identity behind the second equality
        shifted = variants["L_g1 rho1 * R_g2 rho2"]
        mats = inverse_matrices(GroupId.SO3, g1.mat) @ grid.matrices() @ g2.mat
        direct = dn.evaluate_matrices(base, mats, "spectral")
        rep.eq(f"3.7 pair {k}: (L_g1 rho1 * R_g2 rho2)(g) = (rho1 * rho2)(g1^-1 g g2)",
               float(np.max(np.abs(shifted.samples - direct))), 0.0, tol)
    t0 = _heat_time_for(grid.bandwidth_capacity)
    chi = dn.heat_kernel_density(grid, t0)
    for k in range(3):
        f = _random(cfg, grid, rng)
        a, b = conv(chi, f), conv(f, chi)
        rep.eq(f"3.8(a) pair {k}: S(chi * f) = S(f * chi)", im.entropy(a), im.entropy(b), tol)
        s1, s2 = dn.symmetrize(_random(cfg, grid, rng)), dn.symmetrize(_random(cfg, grid, rng))
        a, b = conv(s1, s2), conv(s2, s1)
        rep.eq(f"3.8(b) pair {k}: S(s1 * s2) = S(s2 * s1)", im.entropy(a), im.entropy(b), tol)
        rep.le(f"3.8(b) pair {k}: ||s1 * s2 - s2 * s1||_1 exceeds witness threshold", wtol, _l1(grid, a, b), 0.0)
    chi1, chi2 = dn.heat_kernel_density(grid, t0), dn.heat_kernel_density(grid, t0 + 0.2)
    base = conv(chi1, chi2)
    s = im.entropy(base)
    for k in range(3):
        g1, g2 = random_element("SO3", rng), random_element("SO3", rng)
        variants = {
            "L_g1 chi1 * L_g2 chi2": conv(T(chi1, "left", g1), T(chi2, "left", g2)),
            "R_g1 chi1 * R_g2 chi2": conv(T(chi1, "right", g1), T(chi2, "right", g2)),
            "R_g1 chi1 * L_g2 chi2": conv(T(chi1, "right", g1), T(chi2, "left", g2)),
        }
        for name, v in variants.items():
            rep.eq(f"3.9 shift {k}: S(chi1 * chi2) = S({name})", s, im.entropy(v), tol)
            rep.le(f"3.9 shift {k}: ||chi1 * chi2 - {name}||_1 exceeds witness threshold",
                   wtol, _l1(grid, base, v), 0.0)
    return rep


def check_fisher_suite(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("4.1-4.4", "Fisher information: invariances and convolution bounds")
    rng = _rng(cfg, "4.1-4.4")
    grid = _so3(cfg)
    rep.fingerprint = _fingerprint(cfg, grid)
    tol = cfg.tolerances.fisher
    F = lambda f, side="right": im.fisher_matrix(f, side).matrix
    maxdiff = lambda a, b: float(np.max(np.abs(a - b)))
    Fu = F(dn.uniform(grid))
    rep.eq("uniform: F = 0", float(np.max(np.abs(Fu))), 0.0, tol)
    dens = [_random(cfg, grid, rng) for _ in range(cfg.densities)]
    for k, f in enumerate(dens):
        Fr, Fl = F(f, "right"), F(f, "left")
        rep.eq(f"density {k}: tr F^r = tr F^l", np.trace(Fr), np.trace(Fl), tol)
        if k < 5:
            h = random_element("SO3", rng)
            rep.eq(f"4.1 density {k}: F^r(L_h f) = F^r(f)", maxdiff(F(dn.transform(f, "left", h)), Fr), 0.0, tol)
            rep.eq(f"4.1 density {k}: F^l(R_h f) = F^l(f)",
                   maxdiff(F(dn.transform(f, "right", h), "left"), Fl), 0.0, tol)
            rep.eq(f"4.1 density {k}: F^r(f inverted) = F^l(f)", maxdiff(F(dn.transform(f, "invert")), Fl), 0.0, tol)
            s = dn.symmetrize(f)
            rep.eq(f"4.1 density {k}: symmetric f has F^r = F^l", maxdiff(F(s), F(s, "left")), 0.0, tol)
            A = np.linalg.qr(rng.normal(size=(3, 3)))[0]
            fm = im.fisher_matrix(f)
            rot = im.fisher_basis_change(fm, A).matrix
            derivs = dn.lie_derivatives(f)
            dy = A @ derivs
            direct = np.array([[math.fsum(grid.weights * dy[i] * dy[j] / f.samples) for j in range(3)]
                               for i in range(3)])
            rep.eq(f"basis change {k}: A F A^T matches recomputation", maxdiff(rot, direct), 0.0, tol)
            rep.eq(f"density {k}: D_FI(f || uniform) = tr F^r",
                   im.fisher_distance(f, dn.uniform(grid)), np.trace(Fr), tol)
    t0 = _heat_time_for(grid.bandwidth_capacity)
    chi = dn.heat_kernel_density(grid, t0)
    for k in range(0, min(10, len(dens) - 1), 2):
        f1, f2 = dens[k], dens[k + 1]
        c = dn.convolve(f1, f2)
        R1, R2, R12 = F(f1), F(f2), F(c)
        L1, L2, L12 = F(f1, "left"), F(f2, "left"), F(c, "left")
        for i in range(3):
            rep.le(f"4.2 pair {k // 2} i={i}: F^r_ii(f1 * f2) <= min(F^r_ii(f1), F^r_ii(f2))",
                   R12[i, i], min(R1[i, i], R2[i, i]), tol)
            rep.le(f"4.2 pair {k // 2} i={i}: F^l_ii(f1 * f2) <= min(F^l_ii(f1), F^l_ii(f2))",
                   L12[i, i], min(L1[i, i], L2[i, i]), tol)
        for j in range(20 if k == 0 else 4):
            P = _random_psd(rng)
            rep.le(f"4.3 pair {k // 2} P{j}: tr[F^r(f1 * f2) P] <= tr[F^r(f2) P]",
                   np.trace(R12 @ P), np.trace(R2 @ P), tol)
            rep.le(f"4.3 pair {k // 2} P{j}: tr[F^l(f1 * f2) P] <= tr[F^l(f1) P]",
                   np.trace(L12 @ P), np.trace(L1 @ P), tol)
            rep.note(f"4.3 pair {k // 2} P{j}: two-sided form, tr[F^r(f1 * f2) P] vs tr[F^r(f1) P]",
                     np.trace(R12 @ P), np.trace(R1 @ P))
        # commuting pair: chi is a class function
        cc = dn.convolve(f1, chi)
        C1, Cx, C12 = F(f1), F(chi), F(cc)
        for j in range(4):
            P = _random_psd(rng)
            for name, Fi in (("f", C1), ("chi", Cx)):
                rep.le(f"4.3 commuting pair {k // 2} P{j}: tr[F^r(f * chi) P] <= tr[F^r({name}) P]",
                       np.trace(C12 @ P), np.trace(Fi @ P), tol)
        for i in range(3):
            rep.le(f"4.2 commuting pair {k // 2} i={i}: F^r_ii(f * chi) <= min",
                   C12[i, i], min(C1[i, i], Cx[i, i]), tol)
    for t1, t2 in ((t0, t0), (t0, t0 + 0.4), (t0 + 0.2, t0 + 1.0)):
        a, b = dn.heat_kernel_density(grid, t1), dn.heat_kernel_density(grid, t2)
        c = dn.convolve(a, b)
        Fa, Fb, Fc = F(a), F(b), F(c)
        for j in range(4):
            P = _random_psd(rng)
            inv = 1.0 / np.trace(Fc @ P)
            bound = 1.0 / np.trace(Fa @ P) + 1.0 / np.trace(Fb @ P)
            rep.le(f"4.4 heat kernels t=({t1:g},{t2:g}) P{j}: 1/tr[F(r1) P] + 1/tr[F(r2) P] <= 1/tr[F(r1 * r2) P]",
                   bound, inv, tol)
            rep.note(f"4.4 heat kernels t=({t1:g},{t2:g}) P{j}: printed direction 1/tr[F(r1 * r2) P] <= sum",
                     inv, bound)
    return rep


def check_de_bruijn(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("5.1", "de Bruijn identity dS/dt = tr(D F^r)/2")
    rng = _rng(cfg, "5.1")
    grid = _so3(cfg)
    L = grid.bandwidth_capacity
    rep.fingerprint = _fingerprint(cfg, grid, step=1e-3)
    alphas = {
        "random": _random(cfg, grid, rng),
        "displaced heat kernel": dn.shifted_heat_kernel(grid, _heat_time_for(L), random_element("SO3", rng)),
    }
    cases = [("isotropic", np.eye(3), np.zeros(3), cfg.tolerances.debruijn_iso),
             ("anisotropic", np.diag([1.0, 0.5, 0.25]), np.zeros(3), cfg.tolerances.debruijn_aniso),
             ("isotropic with drift", np.eye(3), np.array([0.3, -0.2, 0.5]), cfg.tolerances.debruijn_iso)]
    dt = 1e-3

    def evolve(alpha, D, h, t):
        prop = hs.heat_propagator(hs.DiffusionParams(D, h, t), alpha.spectrum.L)
        return dn.from_spectrum(hs.spectral_convolve(alpha.spectrum, prop), grid)

    for aname, alpha in alphas.items():
        for cname, D, h, tol in cases:
            for t in (0.3, 0.5):
                dS = (im.entropy(evolve(alpha, D, h, t + dt)) - im.entropy(evolve(alpha, D, h, t - dt))) / (2 * dt)
                rhs = 0.5 * float(np.trace(D @ im.fisher_matrix(evolve(alpha, D, h, t)).matrix))
                rep.le(f"{aname}, {cname}, t={t}: relative error", abs(dS - rhs) / abs(rhs), tol, 0.0)
                rep.note(f"{aname}, {cname}, t={t}: dS/dt vs tr(D F)/2", dS, rhs)
    u = dn.uniform(grid)
    dS = (im.entropy(evolve(u, np.eye(3), np.zeros(3), 0.3 + dt))
          - im.entropy(evolve(u, np.eye(3), np.zeros(3), 0.3 - dt))) / (2 * dt)
    rep.eq("uniform: dS/dt = 0", dS, 0.0, cfg.tolerances.inequality)
    rep.eq("uniform: tr(D F)/2 = 0", 0.5 * im.fisher_matrix(u).trace, 0.0, cfg.tolerances.inequality)
    return rep


def check_log_sobolev(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("6.1-6.2", "Entropy power, Fisher information and log-Sobolev bounds")
    rng = _rng(cfg, "6.1-6.2")
    rgrid = build_grid("R1", None, 96, 10.0)
    rep.fingerprint = {"seed": cfg.seed, "R1": list(rgrid.resolution), "R1_box": 10.0}
    f = dn.gaussian(rgrid, 0.0, 1.0)
    rep.eq("6.1 R1 Gaussian sigma=1: 1/N = tr F", 1.0 / im.entropy_power(f), im.fisher_matrix(f).trace,
           cfg.tolerances.fisher)
    rep.eq("R1 Gaussian sigma=1: S = log(2 pi e)/2", im.entropy(f), 0.5 * math.log(2 * math.pi * math.e),
           cfg.tolerances.fisher)
    for k in range(5):
        m = rng.integers(1, 4)
        f = dn.gaussian_mixture(rgrid, rng.uniform(-2, 2, m), rng.uniform(0.6, 1.4, m), rng.dirichlet(np.ones(m)))
        rep.le(f"6.1 R1 mixture {k}: 1/N <= tr F", 1.0 / im.entropy_power(f), im.fisher_matrix(f).trace,
               cfg.tolerances.inequality)
    for t in (0.3, 0.6, 1.0):
        L = max(cfg.bandwidth, hs.required_bandwidth(t))
        grid = _so3(cfg, L)
        rho = dn.heat_kernel_density(grid, t)
        rep.eq(f"6.2 t={t}: f = rho_t gives D_KL = 0", im.kl_divergence(rho, rho), 0.0, cfg.tolerances.log_sobolev)
        for k in range(2):
            f = dn.shifted_heat_kernel(grid, t, random_element("SO3", rng, 0.5) if k else
                                       random_element("SO3", rng), "left" if k == 0 else "right")
            kl = im.kl_divergence(f, rho)
            fi = im.fisher_distance(f, rho)
            rep.le(f"6.2 t={t} shifted kernel {k} (L={L}): D_KL <= (t/2) D_FI", kl, 0.5 * t * fi,
                   cfg.tolerances.log_sobolev)
    return rep


def check_epi_counterexample(cfg: SuiteConfig) -> SectionReport:
    rep = SectionReport("7", "Entropy power inequality fails on SO(3)")
    rng = _rng(cfg, "7")
    t = 0.5
    L = max(cfg.bandwidth, hs.required_bandwidth(t))
    grid = _so3(cfg, L)
    rep.fingerprint = _fingerprint(cfg, grid)
    u = dn.uniform(grid)
    for name, f in (("uniform", u), (f"heat kernel t={t}", dn.heat_kernel_density(grid, t)),
                    ("random", _random(cfg, grid, rng))):
        Nf = im.entropy_power(f)
        Nc = im.entropy_power(dn.convolve(u, f))
        rep.eq(f"{name}: N(uniform * f) = 1", Nc, 1.0, cfg.tolerances.equality)
        rep.le(f"{name}: N(uniform * f) < 1 + N(f) (Euclidean EPI would need >=)", Nc, 1.0 + Nf, 0.0)
        rep.note(f"{name}: violation margin N(f)", Nf, 0.0)
        if name.startswith("heat"):
            rep.le(f"{name}: margin N(f) > {cfg.tolerances.epi_margin}", cfg.tolerances.epi_margin, Nf, 0.0)
    a, b = dn.heat_kernel_density(grid, t), dn.heat_kernel_density(grid, t + 0.3)
    prod = hs.spectral_convolve(a.spectrum, b.spectrum)
    live = hs.live_blocks(prod)
    da, db, dab = (hs.dispersions(s, support=live) for s in (a.spectrum, b.spectrum, prod))
    rep.note("dispersion substitute: blocks compared", float(live.sum()), float(live.size))
    rep.le("dispersion substitute: D(f1) + D(f2) <= D(f1 * f2)", da.D + db.D, dab.D, cfg.tolerances.spectral)
    return rep


REGISTRY = {
    "3.1": (check_entropy_convolution, "S(f1 * f2) >= max(S(f1), S(f2)); n-fold chains"),
    "3.2": (check_dispersions, "D <= D2, superadditivity, tildeD <= S, Plancherel"),
    "3.3": (check_finite_convolution, "finite-group two-sided entropy bound"),
    "3.4": (check_coset, "coset marginals; direct products"),
    "3.5": (check_double_coset, "double-coset marginals"),
    "3.6": (check_nested, "nested coset marginals"),
    "3.7-3.9": (check_entropy_equalities, "equal entropy of inequivalent convolutions"),
    "4.1-4.4": (check_fisher_suite, "Fisher invariances and convolution bounds"),
    "5.1": (check_de_bruijn, "de Bruijn identity"),
    "6.1-6.2": (check_log_sobolev, "entropy power / log-Sobolev bounds"),
    "7": (check_epi_counterexample, "entropy power inequality counterexample"),
}


def theorem_matrix() -> str:
    """Markdown table of registered checks, generated from the registry."""
    lines = ["| id | check function | content |", "|---|---|---|"]
    for key, (fn, what) in REGISTRY.items():
        lines.append(f"| `{key}` | `{fn.__name__}` | {what} |")
    return "\n".join(lines)


def run_check(key: str, cfg: SuiteConfig) -> SectionReport:
    fn = REGISTRY[key][0]
    try:
        return fn(cfg)
    except Exception as exc:  # one failing pipeline must not abort the suite
        rep = SectionReport(key, REGISTRY[key][1], status="errored")
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.fingerprint = {"seed": cfg.seed, "traceback": traceback.format_exc().splitlines()[-3:]}
        return rep


def _run_keyed(args):
    key, cfg_dict = args
    return run_check(key, SuiteConfig.from_dict(cfg_dict)).as_dict()


def run_checks(cfg: SuiteConfig, jobs: int = 1) -> list:
    keys = list(REGISTRY) if cfg.select is None else [k for k in REGISTRY if k in cfg.select]
    if jobs > 1 and len(keys) > 1:
        payload = [(k, cfg.to_dict()) for k in keys]
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_keyed, payload))
    return [run_check(k, cfg).as_dict() for k in keys]


def build_report(cfg: SuiteConfig, sections: list, timestamp: str | None = None) -> dict:
    asserted = sum(1 for s in sections for r in s["records"] if r["pass"] is not None)
    failed = sum(1 for s in sections for r in s["records"] if r["pass"] is False)
    return {
        "schema": REPORT_SCHEMA,
        "timestamp": timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.to_dict(),
        "sections": sections,
        "summary": {
            "sections": len(sections),
            "errored": [s["theorem"] for s in sections if s["status"] == "errored"],
            "failed_sections": [s["theorem"] for s in sections if not s["passed"]],
            "asserted_records": asserted,
            "failed_records": failed,
            "passed": all(s["passed"] for s in sections),
        },
    }


def _csv_text(section: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "kind", "lhs", "rhs", "slack", "tolerance", "pass"])
    for r in section["records"]:
        w.writerow([r["label"], r["kind"], _fmt(r["lhs"]), _fmt(r["rhs"]), _fmt(r["slack"]),
                    _fmt(r["tolerance"]), "" if r["pass"] is None else str(r["pass"]).lower()])
    return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))


def summary_text(report: dict) -> str:
    lines = [f"lieinfo verification report ({report['timestamp']})", ""]
    for s in report["sections"]:
        asserted = [r for r in s["records"] if r["pass"] is not None]
        ok = sum(1 for r in asserted if r["pass"])
        status = "ERRORED" if s["status"] == "errored" else ("PASS" if s["passed"] else "FAIL")
        # distance to failure: positive means the record passes with room to spare
        worst = min((r["slack"] + r["tolerance"] if r["kind"] == "inequality" else r["tolerance"] - r["slack"]
                     for r in asserted if r["slack"] is not None), default=None)
        lines.append(f"[{status:7}] {s['theorem']:8} {s['title']}: {ok}/{len(asserted)} records pass"
                     + ("" if worst is None else f", worst margin {worst:.3e}"))
        if s["error"]:
            lines.append(f"          error: {s['error']}")
        for r in asserted:
            if not r["pass"]:
                lines.append(f"          failed: {r['label']} (lhs={r['lhs']}, rhs={r['rhs']})")
    summ = report["summary"]
    lines += ["", f"overall: {'PASS' if summ['passed'] else 'FAIL'} "
                  f"({summ['asserted_records'] - summ['failed_records']}/{summ['asserted_records']} records)"]
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {"json": os.path.join(out_dir, "report.json"), "summary": os.path.join(out_dir, "summary.txt")}
    with open(paths["json"], "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
    for s in report["sections"]:
        name = "section_" + s["theorem"].replace(".", "_") + ".csv"
        paths[s["theorem"]] = os.path.join(out_dir, name)
        with open(paths[s["theorem"]], "w") as fh:
            fh.write(_csv_text(s))
    with open(paths["summary"], "w") as fh:
        fh.write(summary_text(report))
    return paths


def run_suite(cfg: SuiteConfig, out_dir=None, jobs: int = 1, timestamp: str | None = None) -> dict:
    """Run the selected checks, optionally write the report files, and return the report."""
    report = build_report(cfg, run_checks(cfg, jobs), timestamp)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def check_marginal_inequalities(cfg: SuiteConfig) -> SectionReport:
    """Coset, double-coset and nested marginal checks combined into one report."""
    parts = [run_check(k, cfg) for k in ("3.4", "3.5", "3.6")]
    rep = SectionReport("3.4-3.6", "Marginal entropy inequalities")
    for p in parts:
        rep.records += [dataclasses.replace(r, label=f"{p.theorem}: {r.label}") for r in p.records]
        rep.fingerprint[p.theorem] = p.fingerprint
        if p.status != "ok":
            rep.status, rep.error = p.status, p.error
    return rep
