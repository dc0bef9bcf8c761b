"""Averages of sampled fields along a dilated plane curve.

apply_average integrates f(x1 - u t, x2 - u g(t)) over t in (0,1] for every
grid point x and dilation u; apply_dyadic_piece restricts t to a smooth
dyadic bump at scale 2^j, apply_rescaled_piece evaluates the unit-scale
piece driven by the rescaled curve, dilate applies the anisotropic scaling
that links the two, and apply_adjoint integrates over both t and u with the
opposite shift sign.

All operators gather field values by bilinear interpolation.  Gathers that
leave the field's grid read zero; this is allowed only when the field's
support keeps a two-cell margin inside its grid (or when the gathers stay
inside the grid entirely), so the zero extension is exact.  Per-cell sums
run in a fixed order, so results do not depend on thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .curves import Curve, rescale
from .errors import DomainError, InvalidCurveError, QuadratureError
from .grids import GridSpec, MixedField, SampledField

__all__ = [
    "QuadratureSpec",
    "build_t_quadrature",
    "smooth_cutoff",
    "dyadic_bump",
    "apply_average",
    "apply_dyadic_piece",
    "apply_rescaled_piece",
    "dilate",
    "apply_adjoint",
]

_TAIL_CELLS = 64
_TAIL_SPLIT = 2.0 ** -6
_TAIL_RATIO = 2.0 ** -0.5
_U_TOL = 1e-9


@dataclass(frozen=True)
class QuadratureSpec:
    """1-D quadrature configuration: composite rule and node count on the
    main segment.  Operators add a geometric midpoint tail near t=0 where
    needed, so t=0 itself is never evaluated."""

    rule: str = "simpson"
    nodes: int = 512

    def __post_init__(self):
        if self.rule not in ("simpson", "midpoint"):
            raise QuadratureError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 16:
            raise QuadratureError("quadrature needs at least 16 nodes")


def _simpson(a: float, b: float, n: int):
    # composite Simpson wants an odd node count; bump even n by one
    if n % 2 == 0:
        n += 1
    t = np.linspace(a, b, n)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return t, w * ((b - a) / (n - 1) / 3.0)


def _midpoint(a: float, b: float, n: int):
    edges = np.linspace(a, b, n + 1)
    return 0.5 * (edges[:-1] + edges[1:]), np.diff(edges)


def _window_quadrature(a: float, b: float, quad: QuadratureSpec | None):
    quad = quad if quad is not None else QuadratureSpec()
    rule = _simpson if quad.rule == "simpson" else _midpoint
    return rule(a, b, quad.nodes)


def build_t_quadrature(quad: QuadratureSpec | None = None):
    """Nodes and weights discretizing the unit-interval average: the
    configured rule on [2^-6, 1] plus 64 geometric midpoint cells below,
    the last one reaching down to 0.  Weights are adjusted to sum to
    exactly 1.0."""
    quad = quad if quad is not None else QuadratureSpec()
    main_t, main_w = _window_quadrature(_TAIL_SPLIT, 1.0, quad)
    edges = _TAIL_SPLIT * _TAIL_RATIO ** np.arange(_TAIL_CELLS)
    tail_t = np.empty(_TAIL_CELLS)
    tail_w = np.empty(_TAIL_CELLS)
    tail_t[:-1] = 0.5 * (edges[1:] + edges[:-1])
    tail_w[:-1] = edges[:-1] - edges[1:]
    tail_t[-1] = 0.5 * edges[-1]
    tail_w[-1] = edges[-1]
    t = np.concatenate([tail_t[::-1], main_t])
    w = np.concatenate([tail_w[::-1], main_w])
    # the correction is itself rounded, so repeat until the sum settles
    for _ in range(4):
        resid = 1.0 - math.fsum(w)
        if resid == 0.0:
            break
        w[np.argmax(w)] += resid
    return t, w


# ---------------------------------------------------------------------------
# smooth dyadic cutoff

def _glue(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    m = s > 0.0
    out[m] = np.exp(-1.0 / s[m])
    return out


def smooth_cutoff(t) -> np.ndarray:
    """Smooth transition equal to 1 on (-inf, 1] and 0 on [2, inf)."""
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.ones_like(t)
    out[t >= 2.0] = 0.0
    m = (t > 1.0) & (t < 2.0)
    a = _glue(2.0 - t[m])
    out[m] = a / (a + _glue(t[m] - 1.0))
    return out[0] if scalar else out


def dyadic_bump(t) -> np.ndarray:
    """Smooth bump supported on [1/2, 2] with value 1 at t=1; its dyadic
    rescalings dyadic_bump(t * 2^-j) sum to 1 over j for every t > 0."""
    return smooth_cutoff(t) - smooth_cutoff(2.0 * np.asarray(t, dtype=np.float64))


# ---------------------------------------------------------------------------
# gather engine

@njit(parallel=True, cache=True)
def _gather_kernel(fv, out, s1, s2, w, base1, r1, base2, r2,
                   aligned, ib1, ib2, lo1, hi1, lo2, hi2):
    # out[io, i2] += sum_k w[k] * f at fractional index
    #   (base1 + io*r1 - s1[k], base2 + i2*r2 - s2[k])
    # with bilinear interpolation and zero outside fv.  s1 is ascending, so
    # each row restricts k to the window whose gathers can touch the support
    # rows lo1..hi1; columns are restricted likewise per k.  Skipped terms
    # gather exact zeros, so windowing does not change the result.
    n1f, n2f = fv.shape
    n1o, n2o = out.shape
    for io in prange(n1o):
        c1 = base1 + io * r1
        klo = np.searchsorted(s1, c1 - hi1 - 1.0, side="left")
        khi = np.searchsorted(s1, c1 - lo1 + 1.0, side="right")
        for k in range(klo, khi):
            if aligned:
                js = int(np.floor(s1[k]))
                fs = s1[k] - js
                if fs > 0.0:
                    j1 = ib1 + io - js - 1
                    fr1 = 1.0 - fs
                else:
                    j1 = ib1 + io - js
                    fr1 = 0.0
            else:
                pf1 = c1 - s1[k]
                j1f = np.floor(pf1)
                j1 = int(j1f)
                fr1 = pf1 - j1f
            if j1 < -1 or j1 > n1f - 1:
                continue
            have_a = 0 <= j1 < n1f
            have_b = 0 <= j1 + 1 < n1f
            g1a = 1.0 - fr1
            wk = w[k]
            s2k = s2[k]
            if aligned:
                js2 = int(np.floor(s2k))
                fs2 = s2k - js2
                if fs2 > 0.0:
                    joff = ib2 - js2 - 1
                    fr2 = 1.0 - fs2
                else:
                    joff = ib2 - js2
                    fr2 = 0.0
                g2a = 1.0 - fr2
                i2lo = lo2 - 1 - joff
                i2hi = hi2 + 1 - joff
                if i2lo < 0:
                    i2lo = 0
                if i2hi > n2o - 1:
                    i2hi = n2o - 1
                for i2 in range(i2lo, i2hi + 1):
                    j2 = joff + i2
                    v = 0.0
                    if 0 <= j2 < n2f:
                        if have_a:
                            v += g1a * g2a * fv[j1, j2]
                        if have_b:
                            v += fr1 * g2a * fv[j1 + 1, j2]
                    if 0 <= j2 + 1 < n2f:
                        if have_a:
                            v += g1a * fr2 * fv[j1, j2 + 1]
                        if have_b:
                            v += fr1 * fr2 * fv[j1 + 1, j2 + 1]
                    out[io, i2] += wk * v
            else:
                i2lo = int(np.floor(((lo2 - 1.0) - base2 + s2k) / r2)) - 1
                i2hi = int(np.ceil(((hi2 + 1.0) - base2 + s2k) / r2)) + 1
                if i2lo < 0:
                    i2lo = 0
                if i2hi > n2o - 1:
                    i2hi = n2o - 1
                for i2 in range(i2lo, i2hi + 1):
                    pf2 = base2 + i2 * r2 - s2k
                    j2f = np.floor(pf2)
                    j2 = int(j2f)
                    fr2 = pf2 - j2f
                    v = 0.0
                    if 0 <= j2 < n2f:
                        if have_a:
                            v += g1a * (1.0 - fr2) * fv[j1, j2]
                        if have_b:
                            v += fr1 * (1.0 - fr2) * fv[j1 + 1, j2]
                    if 0 <= j2 + 1 < n2f:
                        if have_a:
                            v += g1a * fr2 * fv[j1, j2 + 1]
                        if have_b:
                            v += fr1 * fr2 * fv[j1 + 1, j2 + 1]
                    out[io, i2] += wk * v


def _support_window(values: np.ndarray):
    nz1, nz2 = np.nonzero(values)
    if nz1.size == 0:
        return None
    return int(nz1.min()), int(nz1.max()), int(nz2.min()), int(nz2.max())


def _gather_plane(fvals, fspec: GridSpec, ospec: GridSpec, u_eff: float,
                  t: np.ndarray, g: np.ndarray, w: np.ndarray, supp):
    out = np.zeros((ospec.n1, ospec.n2))
    if supp is None:
        return out
    inv1 = 1.0 / fspec.dx1
    inv2 = 1.0 / fspec.dx2
    s1 = (u_eff * t) * inv1
    s2 = (u_eff * g) * inv2
    if s1[0] > s1[-1]:
        s1 = np.ascontiguousarray(s1[::-1])
        s2 = np.ascontiguousarray(s2[::-1])
        w = np.ascontiguousarray(w[::-1])
    r1 = ospec.dx1 * inv1
    r2 = ospec.dx2 * inv2
    base1 = ((ospec.x1_range[0] - fspec.x1_range[0])
             + 0.5 * (ospec.dx1 - fspec.dx1)) * inv1
    base2 = ((ospec.x2_range[0] - fspec.x2_range[0])
             + 0.5 * (ospec.dx2 - fspec.dx2)) * inv2
    aligned = (abs(r1 - 1.0) < 1e-12 and abs(r2 - 1.0) < 1e-12
               and abs(base1 - round(base1)) < 1e-9
               and abs(base2 - round(base2)) < 1e-9)
    ib1 = int(round(base1)) if aligned else 0
    ib2 = int(round(base2)) if aligned else 0
    if aligned:
        base1, r1, base2, r2 = float(ib1), 1.0, float(ib2), 1.0
    lo1, hi1, lo2, hi2 = supp
    _gather_kernel(fvals, out, s1, s2, w, base1, r1, base2, r2,
                   aligned, ib1, ib2, lo1, hi1, lo2, hi2)
    return out


def _prod_extent(a_lo: float, a_hi: float, b_lo: float, b_hi: float):
    c = (a_lo * b_lo, a_lo * b_hi, a_hi * b_lo, a_hi * b_hi)
    return min(c), max(c)


def _check_domain(values, fspec: GridSpec, ospec: GridSpec,
                  u_lo, u_hi, t, g):
    """Require that every gather either stays inside the field's grid or is
    a provably-zero read: support at least 2 cells from the boundary."""
    s1_lo, s1_hi = _prod_extent(u_lo, u_hi, float(t[0]), float(t[-1]))
    s2_lo, s2_hi = _prod_extent(u_lo, u_hi, float(g.min()), float(g.max()))
    y1_lo = ospec.x1_range[0] + 0.5 * ospec.dx1 - s1_hi
    y1_hi = ospec.x1_range[1] - 0.5 * ospec.dx1 - s1_lo
    y2_lo = ospec.x2_range[0] + 0.5 * ospec.dx2 - s2_hi
    y2_hi = ospec.x2_range[1] - 0.5 * ospec.dx2 - s2_lo
    if (y1_lo >= fspec.x1_range[0] + 0.5 * fspec.dx1
            and y1_hi <= fspec.x1_range[1] - 0.5 * fspec.dx1
            and y2_lo >= fspec.x2_range[0] + 0.5 * fspec.dx2
            and y2_hi <= fspec.x2_range[1] - 0.5 * fspec.dx2):
        return
    nz1, nz2 = np.nonzero(values)
    if nz1.size == 0:
        return
    margin = min(nz1.min(), fspec.n1 - 1 - nz1.max(),
                 nz2.min(), fspec.n2 - 1 - nz2.max())
    if margin >= 2:
        return
    raise DomainError(
        "gathers leave the field's grid and its support has no 2-cell "
        "margin, so the zero extension would be wrong")


def _check_u_values(u_lo: float, u_hi: float):
    if u_lo < 1.0 - _U_TOL or u_hi > 2.0 + _U_TOL:
        raise DomainError("dilation parameter must lie in [1, 2]")


# ---------------------------------------------------------------------------
# operators

def apply_average(f: SampledField, curve: Curve,
                  spec: GridSpec | None = None,
                  quad: QuadratureSpec | None = None) -> MixedField:
    """Average of f along the curve dilated by u, for every cell center of
    the output grid and every u-cell center: the t-quadrature of
    f(x1 - u t, x2 - u g(t)) over (0, 1]."""
    t, w = build_t_quadrature(quad)
    return _averaged_field(f, curve, t, w, spec)


def apply_dyadic_piece(f: SampledField, curve: Curve, j: int,
                       spec: GridSpec | None = None,
                       quad: QuadratureSpec | None = None) -> MixedField:
    """Piece of apply_average with the smooth dyadic weight at scale 2^j:
    integration over t in [2^(j-1), min(2^(j+1), 1)], weighted by the bump
    at t * 2^-j.  The upper truncation at t=1 matches apply_average's
    integration range, so the pieces for j = 0, -1, ... sum back to it."""
    j = int(j)
    if j > 0:
        raise DomainError("dyadic piece index must be a non-positive integer")
    a = 2.0 ** (j - 1)
    b = min(2.0 ** (j + 1), 1.0)
    t, w = _window_quadrature(a, b, quad)
    w = w * dyadic_bump(np.ldexp(t, -j))
    return _averaged_field(f, curve, t, w, spec)


def _averaged_field(f: SampledField, curve: Curve, t, w,
                    spec: GridSpec | None) -> MixedField:
    ospec = spec if spec is not None else f.spec.with_u()
    if ospec.u_range is None:
        raise DomainError("output grid needs a u-range")
    _check_u_values(*ospec.u_range)
    g = np.asarray(curve.eval(t), dtype=np.float64)
    us = ospec.u_centers()
    _check_domain(f.values, f.spec, ospec, float(us[0]), float(us[-1]), t, g)
    supp = _support_window(f.values)
    out = np.empty((ospec.n1, ospec.n2, ospec.nu))
    for c, u in enumerate(us):
        out[:, :, c] = _gather_plane(f.values, f.spec, ospec, float(u),
                                     t, g, w, supp)
    return MixedField(ospec, out)


def apply_rescaled_piece(f: SampledField, curve: Curve, j: int, u: float,
                         spec: GridSpec | None = None,
                         quad: QuadratureSpec | None = None) -> SampledField:
    """Unit-scale counterpart of the dyadic piece at a single dilation u:
    bump-weighted quadrature over t in [1/2, min(2, 2^-j)] driven by the
    rescaled curve.  The upper truncation mirrors apply_dyadic_piece's
    restriction to t <= 1 (it only bites at j = 0)."""
    rc = rescale(curve, j)
    u = float(u)
    _check_u_values(u, u)
    a = 0.5
    b = min(2.0, 2.0 ** -rc.j)
    t, w = _window_quadrature(a, b, quad)
    w = w * dyadic_bump(t)
    g = np.asarray(rc.eval(t), dtype=np.float64)
    ospec = (spec if spec is not None else f.spec).plane_only()
    _check_domain(f.values, f.spec, ospec, u, u, t, g)
    vals = _gather_plane(f.values, f.spec, ospec, u, t, g, w,
                         _support_window(f.values))
    return SampledField(ospec, vals)


def dilate(f: SampledField, curve: Curve, j: int) -> SampledField:
    """Anisotropic dilation: the returned field represents
    x -> f(2^j x1, c x2) with c the curve value at 2^j.  The output grid is
    f's grid with the first axis scaled by 2^-j and the second by 1/c, so
    the pullback lands exactly on f's cell centers and values carry over
    unchanged."""
    j = int(j)
    if j > 0:
        raise DomainError("dilation index must be a non-positive integer")
    c = float(curve.eval(2.0 ** j))
    if not math.isfinite(c) or c <= 0.0:
        raise InvalidCurveError(
            f"curve value {c!r} at 2^{j} cannot drive the dilation")
    k = 2.0 ** -j
    spec = f.spec
    new = GridSpec((spec.x1_range[0] * k, spec.x1_range[1] * k),
                   (spec.x2_range[0] / c, spec.x2_range[1] / c),
                   spec.n1, spec.n2)
    return SampledField(new, f.values.copy())


def apply_adjoint(g: MixedField, curve: Curve,
                  spec: GridSpec | None = None,
                  quad: QuadratureSpec | None = None) -> SampledField:
    """Adjoint average: the (t, u)-quadrature of g(x1 + u t, x2 + u c(t), u)
    with t over (0, 1] and u over the cells of g's u-grid (midpoint rule at
    the native u slices, so no interpolation in u).  g is treated as zero
    outside its u-range."""
    t, w = build_t_quadrature(quad)
    gam = np.asarray(curve.eval(t), dtype=np.float64)
    _check_u_values(*g.spec.u_range)
    ospec = (spec if spec is not None else g.spec).plane_only()
    us = g.spec.u_centers()
    union = np.any(g.values != 0.0, axis=2)
    _check_domain(union, g.spec, ospec, -float(us[-1]), -float(us[0]), t, gam)
    du = g.spec.du
    out = np.zeros((ospec.n1, ospec.n2))
    for c, u in enumerate(us):
        sl = np.ascontiguousarray(g.values[:, :, c])
        supp = _support_window(sl)
        if supp is None:
            continue
        out += du * _gather_plane(sl, g.spec, ospec, -float(u), t, gam, w, supp)
    return SampledField(ospec, out)
