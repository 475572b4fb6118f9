"""Haar-measure quadrature grids and deterministic integration.

Grids are tensor products of one-dimensional rules.  Periodic axes use the
trapezoidal rule on equispaced nodes, bounded axes use Gauss-Legendre, and
the SO(3) Euler beta axis uses Gauss-Legendre nodes in cos(beta) so that the
sin(beta) Haar factor is absorbed into the rule.

Nodes are stored in C order of the axes, so ``samples.reshape(grid.shape)``
indexes as ``[axis0, axis1, ...]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .group_core import (DEFAULT_CHART, ChartId, GroupId, HAAR_NORMALIZATION, as_chart, as_group,
                         chart_matrices, check_chart)

GRID_SCHEMA = "lieinfo.grid/1"
MIN_RESOLUTION = 4
BOUNDARY_MASS_TOL = 1e-9


class GridError(ValueError):
    pass


class TruncationError(GridError):
    """Density mass reaches the edge of a truncation box."""


@dataclass(frozen=True)
class ProductGroup:
    """Direct product of supported groups, used for factor-marginal tests."""
    factors: tuple

    @property
    def dim(self):
        return sum(g.dim for g in self.factors)

    @property
    def compact(self):
        return all(g.compact for g in self.factors)

    @property
    def value(self):
        return "x".join(g.value for g in self.factors)


# axis kinds
PERIODIC = "periodic"      # uniform nodes on [0, 2pi) or [-pi, pi), trapezoid
LEGENDRE = "legendre"      # Gauss-Legendre nodes on [lo, hi]
COS_LEGENDRE = "cos_legendre"  # Gauss-Legendre nodes in cos(beta), beta in (0, pi)


@dataclass(frozen=True, eq=False)
class Grid:
    group: object
    chart: object
    resolution: tuple
    truncation: tuple | None
    axes: tuple
    axis_weights: tuple
    axis_kinds: tuple
    nodes: np.ndarray
    weights: np.ndarray
    factor_grids: tuple = field(default=())

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self):
        return int(self.weights.shape[0])

    @property
    def volume(self):
        return math.fsum(self.weights)

    def matrices(self):
        """Element matrices at every node."""
        if isinstance(self.group, ProductGroup):
            raise GridError("product grids have no single matrix realisation")
        return chart_matrices(self.group, self.chart, self.nodes)

    @property
    def bandwidth_capacity(self) -> int:
        """Largest SO(3) degree L whose transforms are exact on this grid."""
        if self.group is not GroupId.SO3 or self.chart is not ChartId.EulerZXZ:
            return -1
        na, nb, ng = self.shape
        return min((na - 1) // 2, (ng - 1) // 2, nb - 1)

    def descriptor(self) -> dict:
        if isinstance(self.group, ProductGroup):
            group = [g.value for g in self.group.factors]
            chart = [c.value for c in self.chart]
        else:
            group, chart = self.group.value, self.chart.value
        return {
            "schema": GRID_SCHEMA,
            "group": group,
            "chart": chart,
            "resolution": list(self.resolution),
            "truncation": None if self.truncation is None else
            [None if t is None else list(t) for t in self.truncation],
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    def same_as(self, other: "Grid") -> bool:
        return self.descriptor() == other.descriptor()


def grid_from_descriptor(desc) -> Grid:
    if isinstance(desc, str):
        desc = json.loads(desc)
    if desc.get("schema") != GRID_SCHEMA:
        raise GridError(f"unsupported grid schema {desc.get('schema')!r}")
    trunc = desc.get("truncation")
    if isinstance(desc["group"], list):
        dims = [as_group(g).dim for g in desc["group"]]
        parts, start = [], 0
        for g, c, d in zip(desc["group"], desc["chart"], dims):
            t = None if trunc is None else trunc[start:start + d]
            parts.append(build_grid(g, c, desc["resolution"][start:start + d],
                                    None if t is None or all(x is None for x in t) else t))
            start += d
        return product_grid(*parts)
    return build_grid(desc["group"], desc["chart"], desc["resolution"], trunc)


def _periodic(n, start=0.0):
    h = 2.0 * math.pi / n
    return start + h * np.arange(n), np.full(n, h)


def _legendre(n, lo, hi):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _normalize_truncation(group, truncation, bounded_axes):
    if truncation is None:
        raise GridError(f"{group.value} is noncompact: a truncation box is required")
    dim = group.dim
    if np.isscalar(truncation):
        t = float(truncation)
        box = [(-t, t) if i in bounded_axes else None for i in range(dim)]
    else:
        box = []
        for i, item in enumerate(truncation):
            if i not in bounded_axes:
                box.append(None)
            elif item is None:
                raise GridError(f"axis {i} needs truncation bounds")
            elif np.isscalar(item):
                box.append((-float(item), float(item)))
            else:
                lo, hi = float(item[0]), float(item[1])
                box.append((lo, hi))
    for i in bounded_axes:
        lo, hi = box[i]
        if not hi > lo:
            raise GridError(f"empty truncation interval on axis {i}")
    return tuple(box)


def build_grid(group, chart=None, resolution=16, truncation=None) -> Grid:
    """Tensor-product Haar quadrature grid."""
    group = as_group(group)
    chart = DEFAULT_CHART[group] if chart is None else as_chart(chart)
    check_chart(group, chart)
    if np.isscalar(resolution):
        resolution = (int(resolution),) * group.dim
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != group.dim:
        raise GridError(f"{group.value} grids need {group.dim} axis counts")
    if min(resolution) < MIN_RESOLUTION:
        raise GridError(f"resolution below minimum {MIN_RESOLUTION}: {resolution}")

    axes, aw, kinds = [], [], []
    box = None
    if group is GroupId.SO3 and chart is ChartId.EulerZXZ:
        na, nb, ng = resolution
        a, wa = _periodic(na)
        x, wx = np.polynomial.legendre.leggauss(nb)
        b = np.arccos(x[::-1])  # increasing beta
        wb = wx[::-1].copy()
        g, wg = _periodic(ng)
        axes, aw, kinds = [a, b, g], [wa, wb, wg], [PERIODIC, COS_LEGENDRE, PERIODIC]
        norm = HAAR_NORMALIZATION[group]
    elif group is GroupId.SO2:
        a, wa = _periodic(resolution[0], start=-math.pi)
        axes, aw, kinds = [a], [wa], [PERIODIC]
        norm = HAAR_NORMALIZATION[group]
    elif chart in (ChartId.Line, ChartId.AlphaBetaGamma) or \
            (group is GroupId.H1 and chart is ChartId.ExpCoords):
        box = _normalize_truncation(group, truncation, set(range(group.dim)))
        for i, n in enumerate(resolution):
            x, w = _legendre(n, *box[i])
            axes.append(x)
            aw.append(w)
            kinds.append(LEGENDRE)
        norm = 1.0
    elif chart is ChartId.CartesianTheta:
        box = _normalize_truncation(group, truncation, {0, 1})
        for i in range(2):
            x, w = _legendre(resolution[i], *box[i])
            axes.append(x)
            aw.append(w)
            kinds.append(LEGENDRE)
        t, wt = _periodic(resolution[2], start=-math.pi)
        axes.append(t)
        aw.append(wt)
        kinds.append(PERIODIC)
        norm = 1.0
    else:
        raise GridError(f"no quadrature rule for {group.value}/{chart.value}")

    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    wmesh = np.meshgrid(*aw, indexing="ij")
    weights = np.ones(nodes.shape[0])
    for w in wmesh:
        weights = weights * w.reshape(-1)
    weights = weights * norm
    for arr in (nodes, weights):
        arr.setflags(write=False)
    return Grid(group, chart, resolution, box, tuple(axes), tuple(aw), tuple(kinds),
                nodes, weights)


def product_grid(*grids: Grid) -> Grid:
    """Tensor product of grids on the factor groups of a direct product."""
    group = ProductGroup(tuple(g.group for g in grids))
    chart = tuple(g.chart for g in grids)
    axes = sum((g.axes for g in grids), ())
    aw = sum((g.axis_weights for g in grids), ())
    kinds = sum((g.axis_kinds for g in grids), ())
    resolution = sum((g.resolution for g in grids), ())
    if all(g.truncation is None for g in grids):
        trunc = None
    else:
        trunc = sum(((g.truncation if g.truncation is not None else (None,) * g.group.dim)
                     for g in grids), ())
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    weights = grids[0].weights
    for g in grids[1:]:
        weights = np.outer(weights, g.weights).reshape(-1)
    nodes.setflags(write=False)
    weights = np.array(weights)
    weights.setflags(write=False)
    return Grid(group, chart, resolution, trunc, axes, aw, kinds, nodes, weights,
                factor_grids=tuple(grids))


def so3_grid(bandwidth: int, resolution=None) -> Grid:
    """Euler grid able to transform spectra up to degree ``bandwidth`` exactly.

    The default places 2L+2 nodes on every axis.
    """
    if resolution is None:
        resolution = 2 * bandwidth + 2
    grid = build_grid(GroupId.SO3, ChartId.EulerZXZ, resolution)
    if grid.bandwidth_capacity < bandwidth:
        raise GridError(f"SO3 grid {grid.resolution} supports degree <= "
                        f"{grid.bandwidth_capacity}, need {bandwidth}")
    return grid


def integrate(grid: Grid, values) -> float:
    """sum_i w_i v_i with correctly rounded (hence order independent) summation."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape[0] != grid.size:
        raise GridError(f"expected {grid.size} values, got {v.shape[0]}")
    return math.fsum(grid.weights * v)


def boundary_mass_fraction(grid: Grid, samples) -> float:
    """Share of the mass carried by the outermost node layer of bounded axes."""
    f = np.asarray(samples, dtype=float).reshape(grid.shape)
    wf = (grid.weights.reshape(grid.shape) * f)
    total = math.fsum(wf.reshape(-1))
    if total == 0:
        return 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    for ax, kind in enumerate(grid.axis_kinds):
        if kind != LEGENDRE:
            continue
        sl = [slice(None)] * len(grid.shape)
        sl[ax] = 0
        mask[tuple(sl)] = True
        sl[ax] = -1
        mask[tuple(sl)] = True
    return abs(math.fsum(wf[mask])) / abs(total)


def check_truncation(grid: Grid, samples, tol=BOUNDARY_MASS_TOL) -> None:
    if LEGENDRE not in grid.axis_kinds:
        return
    frac = boundary_mass_fraction(grid, samples)
    if frac > tol:
        raise TruncationError(f"{frac:.3e} of the mass sits on the truncation boundary "
                              f"(limit {tol:g}); enlarge the box")
