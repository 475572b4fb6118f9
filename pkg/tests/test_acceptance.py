"""Acceptance criteria 1-13 at the default desk-scale configuration (seed 42).

Each test records a one-line verdict that the terminal summary prints under
"acceptance criteria"; running this file as a script prints the same lines.
"""
import json
import math

import numpy as np
import pytest

from lieinfo import cli
from lieinfo import harmonic_so3 as hs
from lieinfo import group_core as gc
from lieinfo.group_core import euler_zxz_angles, inverse_matrices, random_element
from lieinfo.quadrature import integrate, so3_grid

SEED = 42


def _verify(out_dir):
    code = cli.main(["verify", "--seed", str(SEED), "--out", str(out_dir)])
    report = json.loads((out_dir / "report.json").read_text())
    return code, report


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    first = _verify(root / "a")
    second = _verify(root / "b")
    return first, second


@pytest.fixture(scope="module")
def report(runs):
    return runs[0][1]


def _section(report, key):
    (s,) = [s for s in report["sections"] if s["theorem"] == key]
    assert s["status"] == "ok", s["error"]
    return s


def _records(section, *needles):
    return [r for r in section["records"] if all(n in r["label"] for n in needles)]


def _check(acceptance, n, ok, detail):
    acceptance[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _all_pass(recs):
    return bool(recs) and all(r["pass"] for r in recs)


def test_criterion_01_closed_forms(acceptance):
    errs = []
    for beta in (0.2, 1.0, math.pi / 2, 2.5):
        for side in ("left", "right"):
            d = abs(np.linalg.det(gc.jacobian("SO3", "EulerZXZ", [0.3, beta, -1.2], side)))
            errs.append(abs(d - math.sin(beta)))
    for r in (0.3, 1.7, math.pi):
        x = np.array([0.0, 0.6, 0.8]) * r
        d = abs(np.linalg.det(gc.jacobian("SO3", "AxisAngleExp", x, "right")))
        errs.append(abs(d - 2 * (1 - math.cos(r)) / r ** 2))
    for q in ([1.0, -2.0, 0.7], [0.0, 3.0, -2.9]):
        for side in ("left", "right"):
            errs.append(abs(abs(np.linalg.det(gc.jacobian("SE2", "CartesianTheta", q, side))) - 1))
            errs.append(abs(abs(np.linalg.det(gc.jacobian("H1", "AlphaBetaGamma", q, side))) - 1))
    for t in (-1.0, 0.0, 0.9):
        for side in ("left", "right"):
            d = abs(np.linalg.det(gc.jacobian("SL2R", "Iwasawa", [0.4, t, -0.3], side)))
            errs.append(abs(d - 0.5 * math.exp(2 * t)))
    worst = max(errs)
    _check(acceptance, 1, worst < 1e-12, f"closed-form determinants, worst error {worst:.2e} (< 1e-12)")


def test_criterion_02_haar_invariance(acceptance):
    grid = so3_grid(8)
    mats = grid.matrices()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        spec = hs.SO3Spectrum(tuple(rng.normal(size=(2 * l + 1,) * 2) + 1j * rng.normal(size=(2 * l + 1,) * 2)
                                    for l in range(9)))
        ev = lambda m: hs.evaluate_spectrum(spec, euler_zxz_angles(m)).real
        base = integrate(grid, ev(mats))
        h = random_element("SO3", rng).mat
        for shifted in (h @ mats, mats @ h, inverse_matrices("SO3", mats)):
            worst = max(worst, abs(integrate(grid, ev(shifted)) - base))
    _check(acceptance, 2, worst < 1e-8, f"left/right/inversion residual {worst:.2e} over 20 functions (< 1e-8)")


def test_criterion_03_plancherel(acceptance, report):
    s = _section(report, "3.2")
    planch = _records(s, "Plancherel")
    l1 = _records(s, "L1 gap spectral vs direct")
    ok = _all_pass(planch) and _all_pass(l1) and all(r["lhs"] < 1e-9 for r in planch) \
        and all(r["lhs"] < 1e-6 for r in l1)
    detail = (f"Plancherel gap max {max(r['lhs'] for r in planch):.1e} over {len(planch)} densities, "
              f"spectral/direct L1 max {max(r['lhs'] for r in l1):.1e}")
    _check(acceptance, 3, ok, detail)


def test_criterion_04_entropy_convolution(acceptance, report):
    s = _section(report, "3.1")
    pairs = _records(s, "max(S1, S2) <= S(f1 * f2)")
    chain = _records(s, "chain: S(f_", "<=")
    ok = len(pairs) == 50 and _all_pass(pairs) and len(chain) == 4 and _all_pass(chain) \
        and all(r["slack"] >= -1e-6 for r in pairs)
    _check(acceptance, 4, ok, f"{len(pairs)} SO3 pairs, min slack {min(r['slack'] for r in pairs):.3e}; "
                              f"5-fold chain monotone")


def test_criterion_05_dispersions(acceptance, report):
    s = _section(report, "3.2")
    recs = _records(s, "D <= D2") + _records(s, "D(f1) + D(f2)") + _records(s, "D2(f1) + D2(f2)")
    tilde = _records(s, "tildeD <= S")
    ok = _all_pass(recs) and _all_pass(tilde) and all(r["slack"] >= -1e-8 for r in recs) \
        and all(r["tolerance"] == 1e-5 for r in tilde)
    _check(acceptance, 5, ok, f"{len(recs)} dispersion records (slack >= -1e-8), {len(tilde)} tildeD <= S records")


def test_criterion_06_finite_two_sided(acceptance, report):
    s = _section(report, "3.3")
    (count,) = _records(s, "pairs checked")
    bounds = _records(s, "worst")
    ok = count["lhs"] == 1000 and _all_pass(bounds) and len(bounds) == 12 and \
        all(r["tolerance"] == 1e-12 for r in bounds) and s["passed"]
    _check(acceptance, 6, ok, f"{int(count['lhs'])} pairs over {len(s['fingerprint']['groups'])} groups, "
                              f"min slack {min(r['slack'] for r in bounds):.3e}")


def test_criterion_07_marginals(acceptance, report):
    secs = [_section(report, k) for k in ("3.4", "3.5", "3.6")]
    so3 = [r for s in secs[:2] for r in _records(s, "SO3 density")]
    finite = [r for s in secs for r in s["records"] if r["tolerance"] == 1e-12]
    ok = all(s["passed"] for s in secs) and len(so3) == 40 and all(r["slack"] >= -1e-5 for r in so3) \
        and _all_pass(finite)
    _check(acceptance, 7, ok, f"{len(finite)} exact finite records, {len(so3)} SO3 records, "
                              f"min SO3 slack {min(r['slack'] for r in so3):.3e}")


def test_criterion_08_equalities(acceptance, report):
    s = _section(report, "3.7-3.9")
    eqs = [r for r in s["records"] if r["kind"] == "equality"]
    wit = _records(s, "witness")
    ok = s["passed"] and all(r["slack"] <= 1e-5 for r in eqs) and all(r["rhs"] > 1e-3 for r in wit)
    _check(acceptance, 8, ok, f"{len(eqs)} equalities, max gap {max(r['slack'] for r in eqs):.1e}; "
                              f"min L1 witness {min(r['rhs'] for r in wit):.3f}")


def test_criterion_09_fisher(acceptance, report):
    s = _section(report, "4.1-4.4")
    trace = _records(s, "tr F^r = tr F^l")
    recip = _records(s, "4.4", "<= 1/tr[F(r1 * r2) P]")
    ok = s["passed"] and len(trace) == 20 and all(r["slack"] < 1e-6 for r in trace) and _all_pass(recip)
    _check(acceptance, 9, ok, f"{sum(1 for r in s['records'] if r['pass'] is not None)} Fisher records; "
                              f"trace identity max {max(r['slack'] for r in trace):.1e}; "
                              f"reciprocal bound min slack {min(r['slack'] for r in recip):.3e}")


def test_criterion_10_de_bruijn(acceptance, report):
    s = _section(report, "5.1")
    iso = [r for r in _records(s, "relative error") if "anisotropic" not in r["label"]]
    aniso = _records(s, "anisotropic", "relative error")
    ok = s["passed"] and all(r["lhs"] < 1e-3 for r in iso) and all(r["lhs"] < 5e-3 for r in aniso) \
        and len(aniso) == 4
    _check(acceptance, 10, ok, f"isotropic max rel. error {max(r['lhs'] for r in iso):.1e}, "
                               f"anisotropic {max(r['lhs'] for r in aniso):.1e}")


def test_criterion_11_log_sobolev(acceptance, report):
    s = _section(report, "6.1-6.2")
    ls = _records(s, "D_KL <= (t/2) D_FI")
    times = {r["label"].split()[1] for r in ls}
    (gauss,) = _records(s, "Gaussian sigma=1: 1/N = tr F")
    ok = s["passed"] and len(times) == 3 and all(r["slack"] >= -1e-5 for r in ls) and gauss["slack"] < 1e-6
    _check(acceptance, 11, ok, f"log-Sobolev min slack {min(r['slack'] for r in ls):.3e} at {sorted(times)}; "
                               f"|1/N - tr F| = {gauss['slack']:.1e}")


def test_criterion_12_epi_counterexample(acceptance, report):
    s = _section(report, "7")
    (margin,) = _records(s, "heat kernel t=0.5: violation margin")
    ok = s["passed"] and margin["lhs"] > 0.05
    _check(acceptance, 12, ok, f"N(uniform * f) = 1 < 1 + N(f), margin N(f) = {margin['lhs']:.4f} (> 0.05)")


def test_criterion_13_determinism(acceptance, runs):
    (code_a, a), (code_b, b) = runs
    a, b = dict(a), dict(b)
    ta, tb = a.pop("timestamp"), b.pop("timestamp")
    same = json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    _check(acceptance, 13, same and code_a == code_b == 0,
           f"two verify runs identical apart from timestamp ({ta} vs {tb}); exit codes {code_a}, {code_b}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
