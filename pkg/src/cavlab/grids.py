"""Gridded fields on a plane rectangle and on rectangle x [1,2], indicator
builders for the extremizer constructions, and Lp / mixed-norm reductions.

Fields store cell-centered samples.  Norms use chunked power sums combined
with exact compensated addition of the chunk partials, so the result does
not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, GridBudgetError, AdmissibilityError
from .curves import Curve

__all__ = [
    "GridSpec",
    "SampledField",
    "MixedField",
    "SetBuilder",
    "rectangle",
    "ball",
    "curve_neighborhood",
    "tilted_box",
    "slab_product",
    "build_indicator",
    "lp_norm",
    "mixed_norm",
    "default_grid",
    "measure",
]

_CELL_BUDGET = 2 ** 26


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered grid on x1_range x x2_range, optionally with a
    dilation axis u_range split into nu cells."""

    x1_range: tuple
    x2_range: tuple
    n1: int
    n2: int
    u_range: tuple | None = None
    nu: int = 0

    def __post_init__(self):
        for (lo, hi), n in ((self.x1_range, self.n1), (self.x2_range, self.n2)):
            if not (hi > lo and n >= 1):
                raise DomainError("grid ranges need hi > lo and >= 1 cell")
        if (self.u_range is None) != (self.nu == 0):
            raise DomainError("u_range and nu must be given together")
        if self.u_range is not None and not (self.u_range[1] > self.u_range[0]
                                             and self.nu >= 1):
            raise DomainError("u grid needs hi > lo and >= 1 cell")
        if self.n1 * self.n2 * max(self.nu, 1) > _CELL_BUDGET:
            raise GridBudgetError(
                f"grid of {self.n1}x{self.n2}x{max(self.nu, 1)} cells exceeds "
                f"the {_CELL_BUDGET} cell budget")

    # -- geometry ----------------------------------------------------------
    @property
    def dx1(self) -> float:
        return (self.x1_range[1] - self.x1_range[0]) / self.n1

    @property
    def dx2(self) -> float:
        return (self.x2_range[1] - self.x2_range[0]) / self.n2

    @property
    def du(self) -> float:
        if self.u_range is None:
            raise DomainError("grid has no dilation axis")
        return (self.u_range[1] - self.u_range[0]) / self.nu

    @property
    def cell_area(self) -> float:
        return self.dx1 * self.dx2

    @property
    def cell_volume(self) -> float:
        return self.cell_area * self.du

    def x1_centers(self) -> np.ndarray:
        return self.x1_range[0] + (np.arange(self.n1) + 0.5) * self.dx1

    def x2_centers(self) -> np.ndarray:
        return self.x2_range[0] + (np.arange(self.n2) + 0.5) * self.dx2

    def u_centers(self) -> np.ndarray:
        return self.u_range[0] + (np.arange(self.nu) + 0.5) * self.du

    def plane_only(self) -> "GridSpec":
        return GridSpec(self.x1_range, self.x2_range, self.n1, self.n2)

    def with_u(self, u_range=(1.0, 2.0), nu=64) -> "GridSpec":
        return GridSpec(self.x1_range, self.x2_range, self.n1, self.n2,
                        tuple(u_range), nu)


def default_grid(n: int = 1024, nu: int = 64, extent: float = 4.0) -> GridSpec:
    return GridSpec((-extent, extent), (-extent, extent), n, n, (1.0, 2.0), nu)


def _check_values(values: np.ndarray, shape: tuple) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise DomainError(f"values shape {arr.shape} does not match grid {shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("field values must be finite")
    return arr


@dataclass
class SampledField:
    """Cell-centered samples of a function on the plane rectangle."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, (self.spec.n1, self.spec.n2))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SampledField":
        return cls(spec.plane_only(), np.zeros((spec.n1, spec.n2)))

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable) -> "SampledField":
        x1 = spec.x1_centers()[:, None]
        x2 = spec.x2_centers()[None, :]
        return cls(spec.plane_only(), np.broadcast_to(
            fn(x1, x2), (spec.n1, spec.n2)).copy())

    def support_box(self):
        """Bounding box of the nonzero cells, or None for the zero field."""
        nz1, nz2 = np.nonzero(self.values)
        if nz1.size == 0:
            return None
        x1c, x2c = self.spec.x1_centers(), self.spec.x2_centers()
        return ((x1c[nz1.min()], x1c[nz1.max()]), (x2c[nz2.min()], x2c[nz2.max()]))

    def interior_support_margin(self) -> int:
        """Number of zero cells between the support and the grid boundary."""
        nz1, nz2 = np.nonzero(self.values)
        if nz1.size == 0:
            return min(self.spec.n1, self.spec.n2)
        return int(min(nz1.min(), self.spec.n1 - 1 - nz1.max(),
                       nz2.min(), self.spec.n2 - 1 - nz2.max()))


@dataclass
class MixedField:
    """Cell-centered samples of a function on rectangle x [u_lo, u_hi]."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.spec.u_range is None:
            raise DomainError("MixedField needs a grid with a dilation axis")
        self.values = _check_values(
            self.values, (self.spec.n1, self.spec.n2, self.spec.nu))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "MixedField":
        return cls(spec, np.zeros((spec.n1, spec.n2, spec.nu)))

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable) -> "MixedField":
        out = np.empty((spec.n1, spec.n2, spec.nu))
        x1 = spec.x1_centers()[:, None]
        x2 = spec.x2_centers()[None, :]
        for iu, u in enumerate(spec.u_centers()):
            out[:, :, iu] = fn(x1, x2, u)
        return cls(spec, out)


# ---------------------------------------------------------------------------
# set builders

@dataclass(frozen=True)
class SetBuilder:
    kind: str
    params: tuple  # kind-specific frozen payload


def rectangle(half_width: float, half_height: float) -> SetBuilder:
    """Axis-aligned box [-a, a] x [-b, b] centered at the origin."""
    if half_width <= 0 or half_height <= 0:
        raise DomainError("rectangle half-sizes must be positive")
    return SetBuilder("rectangle", (float(half_width), float(half_height)))


def ball(radius: float, center=(0.0, 0.0)) -> SetBuilder:
    if radius <= 0:
        raise DomainError("ball radius must be positive")
    return SetBuilder("ball", (float(radius), float(center[0]), float(center[1])))


def curve_neighborhood(curve: Curve, eps: float, u=None,
                       reflected: bool = False) -> SetBuilder:
    """eps-neighborhood of {(u t, u gamma(t)) : t in (0,1]}, either at a
    single dilation u or swept over the grid's whole u-range (u=None).
    reflected=True mirrors through the origin."""
    if eps <= 0:
        raise DomainError("neighborhood width must be positive")
    return SetBuilder("curve_neighborhood",
                      (curve, float(eps), None if u is None else float(u),
                       bool(reflected)))


def tilted_box(curve: Curve, eps: float) -> SetBuilder:
    """Box aligned with the curve's endpoint tangent frame: half-extent
    6 eps along e1 = -(1, g'(1))/sqrt(1+g'(1)^2) and (3+2|g''(1)|) eps^2
    along the normal e2.  The curve is normalized to g(1) = 1 first."""
    if eps <= 0:
        raise DomainError("box scale must be positive")
    g1 = curve.eval(1.0)
    if g1 == 0.0:
        raise AdmissibilityError("curve vanishes at t=1; cannot normalize")
    d1 = curve.eval(1.0, 1) / g1
    d2 = curve.eval(1.0, 2) / g1
    if abs(d1 - 1.0) <= 1e-6:
        raise AdmissibilityError(
            "tilted box needs the normalized curve to satisfy g'(1) != g(1)")
    return SetBuilder("tilted_box", (float(eps), float(d1), float(d2)))


def slab_product(radius: float, u_lo: float, u_hi: float) -> SetBuilder:
    """Product of a ball at the origin with the dilation slab [u_lo, u_hi]."""
    if radius <= 0 or not u_hi > u_lo:
        raise DomainError("slab product needs radius > 0 and u_hi > u_lo")
    return SetBuilder("slab_product", (float(radius), float(u_lo), float(u_hi)))


def _bbox_of(builder: SetBuilder, spec: GridSpec):
    kind, pr = builder.kind, builder.params
    if kind == "rectangle":
        a, b = pr
        return (-a, a), (-b, b)
    if kind == "ball":
        r, c1, c2 = pr
        return (c1 - r, c1 + r), (c2 - r, c2 + r)
    if kind == "slab_product":
        r = pr[0]
        return (-r, r), (-r, r)
    if kind == "tilted_box":
        eps, d1, d2 = pr
        h1 = 6.0 * eps
        h2 = (3.0 + 2.0 * abs(d2)) * eps * eps
        nrm = math.sqrt(1.0 + d1 * d1)
        e1 = (-1.0 / nrm, -d1 / nrm)
        e2 = (-d1 / nrm, 1.0 / nrm)
        w1 = h1 * abs(e1[0]) + h2 * abs(e2[0])
        w2 = h1 * abs(e1[1]) + h2 * abs(e2[1])
        return (-w1, w1), (-w2, w2)
    if kind == "curve_neighborhood":
        curve, eps, u, refl = pr
        us = (u, u) if u is not None else spec.u_range
        if us is None:
            raise DomainError("swept neighborhood needs a grid with a u-range")
        g = curve.eval(np.geomspace(2.0 ** -40, 1.0, 512))
        g_lo, g_hi = us[1] * min(0.0, g.min()), us[1] * max(0.0, g.max())
        box1 = (-eps, us[1] + eps)
        box2 = (g_lo - eps, g_hi + eps)
        if refl:
            box1 = (-box1[1], -box1[0])
            box2 = (-box2[1], -box2[0])
        return box1, box2
    raise DomainError(f"unknown set kind {kind!r}")


def _margin_check(builder: SetBuilder, spec: GridSpec):
    (a1, b1), (a2, b2) = _bbox_of(builder, spec)
    lo1 = spec.x1_range[0] + 2 * spec.dx1
    hi1 = spec.x1_range[1] - 2 * spec.dx1
    lo2 = spec.x2_range[0] + 2 * spec.dx2
    hi2 = spec.x2_range[1] - 2 * spec.dx2
    if a1 < lo1 or b1 > hi1 or a2 < lo2 or b2 > hi2:
        raise DomainError(
            f"set bbox [{a1:.4g},{b1:.4g}]x[{a2:.4g},{b2:.4g}] does not fit "
            "the grid with a 2-cell margin")


def _curve_cloud(curve: Curve, spec: GridSpec, u, reflected: bool) -> np.ndarray:
    # dense (>= 4 samples per crossed cell) point cloud along the dilated arc
    step = 0.25 * min(spec.dx1, spec.dx2)
    if u is None:
        u_lo, u_hi = spec.u_range
        n_u = max(2, int(math.ceil((u_hi - u_lo) * (1.0 + abs(curve.eval(1.0)))
                                   / step)) + 1)
        us = np.linspace(u_lo, u_hi, min(n_u, 4096))
    else:
        us = np.array([u])
    # geometric refinement near 0 handles unbounded slope of fractional powers
    n_lin = max(16, int(math.ceil(2.0 * max(us) / step)) + 1)
    ts = np.concatenate([
        np.geomspace(2.0 ** -40, 2.0 ** -4, 2048, endpoint=False),
        np.linspace(2.0 ** -4, 1.0, min(n_lin, 2 ** 17)),
    ])
    g = curve.eval(ts)
    pts = np.empty((us.size * ts.size, 2))
    for i, uu in enumerate(us):
        pts[i * ts.size:(i + 1) * ts.size, 0] = uu * ts
        pts[i * ts.size:(i + 1) * ts.size, 1] = uu * g
    if reflected:
        pts = -pts
    return pts


def build_indicator(builder: SetBuilder, spec: GridSpec):
    """Indicator field of the builder's set: 1 on cells whose center lies in
    the set.  slab_product yields a MixedField, all other kinds a
    SampledField."""
    _margin_check(builder, spec)
    kind, pr = builder.kind, builder.params
    x1 = spec.x1_centers()[:, None]
    x2 = spec.x2_centers()[None, :]
    if kind == "rectangle":
        a, b = pr
        mask = (np.abs(x1) <= a) & (np.abs(x2) <= b)
    elif kind == "ball":
        r, c1, c2 = pr
        mask = (x1 - c1) ** 2 + (x2 - c2) ** 2 <= r * r
    elif kind == "tilted_box":
        eps, d1, d2 = pr
        nrm = math.sqrt(1.0 + d1 * d1)
        p1 = (-x1 - d1 * x2) / nrm      # projection on e1
        p2 = (-d1 * x1 + x2) / nrm      # projection on e2
        mask = (np.abs(p1) <= 6.0 * eps) & \
               (np.abs(p2) <= (3.0 + 2.0 * abs(d2)) * eps * eps)
    elif kind == "curve_neighborhood":
        from scipy.spatial import cKDTree
        curve, eps, u, refl = pr
        cloud = _curve_cloud(curve, spec, u, refl)
        tree = cKDTree(cloud)
        (a1, b1), (a2, b2) = _bbox_of(builder, spec)
        x1c, x2c = spec.x1_centers(), spec.x2_centers()
        i1 = np.nonzero((x1c >= a1 - spec.dx1) & (x1c <= b1 + spec.dx1))[0]
        i2 = np.nonzero((x2c >= a2 - spec.dx2) & (x2c <= b2 + spec.dx2))[0]
        mask = np.zeros((spec.n1, spec.n2), dtype=bool)
        if i1.size and i2.size:
            qq = np.stack(np.meshgrid(x1c[i1], x2c[i2], indexing="ij"),
                          axis=-1).reshape(-1, 2)
            dist, _ = tree.query(qq, k=1, distance_upper_bound=eps * 1.0000001)
            mask[np.ix_(i1, i2)] = (dist <= eps).reshape(i1.size, i2.size)
    elif kind == "slab_product":
        r, u_lo, u_hi = pr
        if spec.u_range is None:
            raise DomainError("slab_product needs a grid with a u-range")
        if u_lo < spec.u_range[0] - 1e-12 or u_hi > spec.u_range[1] + 1e-12:
            raise DomainError("slab exceeds the grid's u-range")
        disk = (x1 * x1 + x2 * x2 <= r * r)
        uc = spec.u_centers()
        umask = (uc >= u_lo) & (uc <= u_hi)
        vals = (disk[:, :, None] & umask[None, None, :]).astype(np.float64)
        return MixedField(spec, vals)
    else:
        raise DomainError(f"unknown set kind {kind!r}")
    return SampledField(spec.plane_only(), mask.astype(np.float64))


# ---------------------------------------------------------------------------
# norms

_CHUNK = 1 << 16


def _chunked_power_sum(flat: np.ndarray, p: float) -> float:
    """Sum of |v|^p by fixed-size chunks, combined with math.fsum, so the
    result is independent of evaluation order to well below 1e-12."""
    parts = []
    for i in range(0, flat.size, _CHUNK):
        seg = flat[i:i + _CHUNK]
        if p == 1.0:
            parts.append(float(np.sum(np.abs(seg))))
        elif p == 2.0:
            parts.append(float(np.dot(seg, seg)))
        else:
            parts.append(float(np.sum(np.abs(seg) ** p)))
    return math.fsum(parts)


def _norm(values: np.ndarray, p, cell: float) -> float:
    if p != math.inf and p < 1:
        raise DomainError("norm exponent must satisfy p >= 1")
    flat = values.ravel()
    if p == math.inf:
        return float(np.max(np.abs(flat))) if flat.size else 0.0
    s = _chunked_power_sum(flat, float(p))
    return (s * cell) ** (1.0 / float(p))


def lp_norm(f: SampledField, p) -> float:
    """(sum |v|^p * cellArea)^(1/p); p = inf gives the max of |v|."""
    return _norm(f.values, p, f.spec.cell_area)


def mixed_norm(g: MixedField, q) -> float:
    """Single-exponent norm over the product measure dx du."""
    return _norm(g.values, q, g.spec.cell_volume)


def measure(f) -> float:
    """Grid measure of an indicator field (sum of values times cell size)."""
    cell = f.spec.cell_volume if isinstance(f, MixedField) else f.spec.cell_area
    return _chunked_power_sum(f.values.ravel(), 1.0) * cell
