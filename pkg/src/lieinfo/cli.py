"""Command-line interface: ``lieinfo <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import density as dn
from . import finite_group as fg
from . import harmonic_so3 as hs
from . import info_metrics as im
from . import suite
from .quadrature import so3_grid


def _print_json(obj):
    json.dump(obj, sys.stdout, indent=1, allow_nan=False)
    sys.stdout.write("\n")


def _cmd_verify(args) -> int:
    data = {}
    if args.config:
        cfg = suite.SuiteConfig.from_file(args.config)
        data = cfg.to_dict()
    overrides = {"group": args.group, "resolution": args.resolution, "bandwidth": args.bandwidth,
                 "seed": args.seed, "select": args.select}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in data:
        raise SystemExit("verify: a seed is required (--seed or the config file)")
    cfg = suite.SuiteConfig.from_dict(data)
    report = suite.run_suite(cfg, args.out, jobs=args.jobs)
    sys.stdout.write(suite.summary_text(report))
    return 0 if report["summary"]["passed"] else 1


def _cmd_theorems(args) -> int:
    print(suite.theorem_matrix())
    return 0


def _cmd_heat_kernel(args) -> int:
    L = args.bandwidth if args.bandwidth is not None else hs.required_bandwidth(args.t)
    grid = so3_grid(L, args.resolution)
    f = dn.heat_kernel_density(grid, args.t)
    dn.save(f, args.out)
    print(f"wrote heat kernel t={args.t:g} on L={L} grid {grid.resolution} to {args.out}")
    return 0


def _cmd_convolve(args) -> int:
    f1, f2 = dn.load(args.first), dn.load(args.second)
    c = dn.convolve(f1, f2, method=args.method)
    dn.save(c, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_entropy(args) -> int:
    f = dn.load(args.density)
    out = {"entropy": im.entropy(f), "entropy_power": im.entropy_power(f)}
    if args.reference:
        out["kl_divergence"] = im.kl_divergence(f, dn.load(args.reference))
    _print_json(out)
    return 0


def _cmd_fisher(args) -> int:
    f = dn.load(args.density)
    F = im.fisher_matrix(f, args.side, args.method)
    _print_json({"side": F.side, "matrix": F.matrix.tolist(), "trace": F.trace,
                 "floor_mass": F.floor_mass, "warnings": list(F.warnings)})
    return 0


def _read_vector(path):
    with open(path) as fh:
        return np.array([float(x) for x in fh.read().replace(",", " ").split()])


def _subgroup(G, text):
    return fg.check_subgroup(G, [int(x) for x in text.split(",") if x.strip()])


def _cmd_fg(args) -> int:
    G = fg.load_table(args.table, args.chains) if args.table else fg.builtin(args.builtin)
    if args.op == "info":
        _print_json({"name": G.name, "order": G.order, "identity": G.identity,
                     "inverse": list(map(int, G.inverse)),
                     "chains": {k: [list(map(int, s)) for s in v] for k, v in G.chains.items()}})
        return 0
    p = fg.as_density(G, _read_vector(args.densities[0]))
    if args.op == "entropy":
        _print_json({"entropy": fg.fg_entropy(p)})
    elif args.op == "convolve":
        q = fg.as_density(G, _read_vector(args.densities[1]))
        c = fg.fg_convolve(G, p, q)
        _print_json({"convolution": c.tolist(), "entropy": fg.fg_entropy(c),
                     "entropies": [fg.fg_entropy(p), fg.fg_entropy(q)]})
    else:
        subs = [_subgroup(G, s) for s in args.subgroups]
        parts = fg.fg_marginalize(G, p, args.op, subs)
        _print_json({"entropy": fg.fg_entropy(p),
                     "marginals": [np.asarray(m).tolist() for m in parts],
                     "marginal_entropies": [fg.fg_entropy(m) for m in parts]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lieinfo", description="Information-theoretic quantities on Lie groups.")
    ap.add_argument("--version", action="version", version=f"lieinfo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the theorem-verification suite")
    p.add_argument("config", nargs="?", help="JSON or TOML config file")
    p.add_argument("--group", choices=["SO3", "SO2", "SE2", "H1"], help="group for the convolution-entropy check")
    p.add_argument("--resolution", type=int, help="SO3 grid points per axis")
    p.add_argument("--bandwidth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--select", nargs="*", metavar="ID", help=f"theorem ids: {' '.join(suite.REGISTRY)}")
    p.add_argument("--out", help="directory for report.json, CSV tables and summary.txt")
    p.add_argument("--jobs", type=int, default=1, help="run checks in parallel processes")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("theorems", help="print the theorem-to-check table")
    p.set_defaults(func=_cmd_theorems)

    p = sub.add_parser("heat-kernel", help="sample the SO(3) heat kernel")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--bandwidth", type=int, help="default: smallest bandwidth that resolves t")
    p.add_argument("--resolution", type=int, help="grid points per axis (default 2L+2)")
    p.add_argument("--out", required=True, help=".csv or binary density file")
    p.set_defaults(func=_cmd_heat_kernel)

    p = sub.add_parser("convolve", help="convolve two density files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--method", choices=["direct", "spectral"], default="direct")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convolve)

    p = sub.add_parser("entropy", help="entropy and entropy power of a density file")
    p.add_argument("density")
    p.add_argument("--reference", help="second density for the KL divergence")
    p.set_defaults(func=_cmd_entropy)

    p = sub.add_parser("fisher", help="Fisher information matrix of a density file")
    p.add_argument("density")
    p.add_argument("--side", choices=["right", "left"], default="right")
    p.add_argument("--method", choices=["auto", "spectral", "fd"], default="auto")
    p.set_defaults(func=_cmd_fisher)

    p = sub.add_parser("fg", help="finite-group operations")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="Cayley-table file (order, then the table row by row)")
    src.add_argument("--builtin", help="Z<n>, S3, S4, D4, Q8 or products like Z3xZ4")
    p.add_argument("--chains", help="JSON file of named subgroup chains for --table")
    p.add_argument("op", choices=["info", "entropy", "convolve", "coset_GH", "double_coset_KGH", "nested_GKH"])
    p.add_argument("densities", nargs="*", help="probability vector files")
    p.add_argument("--subgroup", dest="subgroups", action="append", default=[],
                   help="comma-separated element indices; repeat for K and H")
    p.set_defaults(func=_cmd_fg)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    need = {"entropy": 1, "convolve": 2}.get(getattr(args, "op", None), 1)
    if args.command == "fg" and args.op != "info" and len(args.densities) < need:
        raise SystemExit(f"fg {args.op}: expected {need} density file(s)")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"lieinfo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
