"""Extremizer families for the dilated-curve average.

Each family builds a shrinking indicator input whose norm ratio under the
average realizes the sharp scaling of one boundedness condition.  The
experiment runner measures R(eps) on width-adapted local grids, the fitter
regresses log R against log eps, and the verdict compares the fitted
exponent with the arithmetic prediction and with the exponent-region
classification.

The constructions only bound the ratio from below, so a fit is consistent
when its slope does not exceed the prediction by more than the tolerance;
the two-sided match is reported separately.  Output grids are restricted
to the window where the known pointwise lower bound concentrates, which
keeps the measured law clean of contributions the construction does not
control (and, for the swept-ball family, trims the near-origin sliver
where every dilation collapses onto the quadrature tail).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .averaging import QuadratureSpec, apply_adjoint, apply_average
from .curves import Curve, omega as curve_omega, rescale
from .errors import AdmissibilityError, DomainError, GridBudgetError
from .grids import (GridSpec, SampledField, ball, build_indicator,
                    curve_neighborhood, lp_norm, mixed_norm, rectangle,
                    slab_product, tilted_box)
from .regions import (ExponentPair, FAMILY_KINDS, predicted_exponent,
                      region_verdict)

__all__ = [
    "ExtremizerFamily",
    "ScalingFit",
    "SharpnessVerdict",
    "EPS_FLOORS",
    "default_eps_sequence",
    "input_grid",
    "output_grid",
    "build_family",
    "run_experiment",
    "fit_exponent",
    "verdict",
    "measured_lower_constant",
]

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.15

# smallest width each family resolves on its auto-selected local grids;
# the tilted box exhausts resolution fastest through its eps^2 side
EPS_FLOORS = {
    "curve_box": 2.0 ** -9,
    "ball": 2.0 ** -9,
    "adjoint_cylinder": 2.0 ** -9,
    "tilted_box": 2.0 ** -7,
    "curve_tube": 2.0 ** -9,
}

_U_THIN = 2e-9  # u-slab width of the fixed-dilation output grid


@dataclass(frozen=True)
class ExtremizerFamily:
    """One extremizer construction: a family kind, the curve it follows,
    and the small constant scaling the set's thin dimension."""

    kind: str
    curve: Curve
    delta: float = 0.125

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise DomainError(f"unknown extremizer family kind "
                              f"{self.kind!r}; expected one of {FAMILY_KINDS}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie strictly between 0 and 1")
        if self.kind == "tilted_box":
            g1 = float(self.curve.eval(1.0))
            if g1 <= 0.0:
                raise AdmissibilityError(
                    "tilted box needs gamma(1) > 0 to normalize the curve")
            if abs(float(self.curve.eval(1.0, 1)) / g1 - 1.0) <= 1e-6:
                raise AdmissibilityError(
                    "tilted box needs g'(1) != g(1) after normalization")


@dataclass
class ScalingFit:
    """Least-squares power law fitted to (eps, ratio) samples."""

    samples: tuple
    slope: float
    intercept: float
    stderr: float
    predicted: float | None = None
    consistent: bool | None = None


@dataclass
class SharpnessVerdict:
    """Comparison of one fitted scaling exponent with the prediction and
    with the exponent-region classification of the pair."""

    kind: str
    inv_p: float
    inv_q: float
    slope: float
    stderr: float
    predicted: float
    tolerance: float
    matched: bool
    consistent: bool
    mode: str
    in_necessary: bool | None
    in_sufficient: bool | None
    region_requirement: str | None
    region_consistent: bool

    def __bool__(self) -> bool:
        return self.consistent and self.region_consistent


def default_eps_sequence(kind: str) -> tuple:
    """Geometric width sequence 2^-3 .. 2^-7 used by the experiments."""
    if kind not in FAMILY_KINDS:
        raise DomainError(f"unknown extremizer family kind {kind!r}")
    return tuple(2.0 ** -k for k in range(3, 8))


def _coerce_pair(pair) -> ExponentPair:
    return pair if isinstance(pair, ExponentPair) else ExponentPair(*pair)


def _exponent(inv) -> float:
    inv = float(inv)
    return math.inf if inv == 0.0 else 1.0 / inv


def _gamma_range(curve: Curve) -> tuple:
    g = np.asarray(curve.eval(np.geomspace(2.0 ** -40, 1.0, 512)), dtype=float)
    return float(min(g.min(), 0.0)), float(max(g.max(), 0.0))


def _operator_curve(family: ExtremizerFamily):
    # the tilted construction is stated for curves with gamma(1) = 1; for
    # anything else both the box and the operator use gamma / gamma(1)
    if family.kind != "tilted_box" or float(family.curve.eval(1.0)) == 1.0:
        return family.curve
    return rescale(family.curve, 0)


def _endpoint_curvature(family: ExtremizerFamily) -> float:
    g1 = float(family.curve.eval(1.0))
    return abs(float(family.curve.eval(1.0, 2)) / g1)


def input_grid(family: ExtremizerFamily, eps: float) -> GridSpec:
    """Width-adapted grid the input indicator is sampled on."""
    eps = float(eps)
    if eps <= 0.0:
        raise DomainError("width must be positive")
    kind = family.kind
    if kind == "curve_box":
        ge = abs(float(family.curve.eval(eps)))
        if ge == 0.0:
            raise DomainError("curve vanishes at the box width")
        return GridSpec((-4 * eps, 4 * eps), (-4 * ge, 4 * ge), 512, 512)
    if kind == "ball":
        r = 8 * family.delta * eps
        return GridSpec((-r, r), (-r, r), 384, 384)
    if kind == "adjoint_cylinder":
        r = 8 * family.delta * eps
        return GridSpec((-r, r), (-r, r), 256, 256,
                        (1.0, 1.0 + 2 * eps), 32)
    if kind == "tilted_box":
        w = 8 * eps
        return GridSpec((-w, w), (-w, w), 1024, 1024)
    if kind == "curve_tube":
        glo, ghi = _gamma_range(family.curve)
        n = 1024 if eps >= 2.0 ** -7 else 2048
        return GridSpec((-1.0 - eps - 0.3, eps + 0.3),
                        (-ghi - eps - 0.3, -glo + eps + 0.3), n, n)
    raise DomainError(f"unknown extremizer family kind {kind!r}")


def output_grid(family: ExtremizerFamily, eps: float) -> GridSpec:
    """Grid the output norm is measured on: the window where the family's
    pointwise lower bound lives."""
    eps = float(eps)
    if eps <= 0.0:
        raise DomainError("width must be positive")
    kind = family.kind
    curve = _operator_curve(family)
    if kind == "curve_box":
        ge = abs(float(family.curve.eval(eps)))
        return GridSpec((-2 * eps, 2 * eps), (-2 * ge, 2 * ge), 768, 768,
                        (1.0, 2.0), 16)
    if kind == "ball":
        glo, ghi = _gamma_range(curve)
        return GridSpec((0.05, 2.25), (2 * glo - 0.05, 2 * ghi + 0.25),
                        1024, 1024, (1.0, 2.0), 24)
    if kind == "adjoint_cylinder":
        u_hi = 1.0 + 2 * eps
        glo, ghi = _gamma_range(curve)
        return GridSpec((-u_hi - 0.2, 0.1),
                        (-u_hi * ghi - 0.2, -u_hi * glo + 0.1), 1024, 1024)
    if kind == "tilted_box":
        glo, ghi = _gamma_range(curve)
        pad = 7 * eps + 0.05
        return GridSpec((-pad, 2.0 + pad), (2 * glo - pad, 2 * ghi + pad),
                        1024, 1024, (1.0, 2.0), 24)
    if kind == "curve_tube":
        w = 2.5 * eps
        return GridSpec((-w, w), (-w, w), 512, 512,
                        (1.0, 1.0 + _U_THIN), 1)
    raise DomainError(f"unknown extremizer family kind {kind!r}")


def _auto_quad(family: ExtremizerFamily, eps: float) -> QuadratureSpec:
    # enough nodes that the thin set is crossed by several of them
    kind = family.kind
    if kind in ("ball", "adjoint_cylinder"):
        return QuadratureSpec(
            nodes=max(512, int(math.ceil(24.0 / (family.delta * eps)))))
    if kind == "curve_tube":
        return QuadratureSpec(nodes=max(512, int(math.ceil(16.0 / eps))))
    if kind == "tilted_box":
        return QuadratureSpec(nodes=1024)
    return QuadratureSpec()


def _thin_cells(family: ExtremizerFamily, eps: float, spec: GridSpec) -> float:
    kind = family.kind
    if kind == "curve_box":
        return 2 * abs(float(family.curve.eval(eps))) / spec.dx2
    if kind in ("ball", "adjoint_cylinder"):
        return 2 * family.delta * eps / spec.dx1
    if kind == "tilted_box":
        return 2 * (3.0 + 2.0 * _endpoint_curvature(family)) * eps * eps \
            / spec.dx1
    return 2 * eps / spec.dx1


def build_family(family: ExtremizerFamily, eps: float,
                 spec: GridSpec | None = None):
    """Indicator input of the construction at width eps, sampled on spec
    (auto-selected when omitted).  The adjoint family yields a MixedField
    on a localized dilation slab, everything else a SampledField."""
    eps = float(eps)
    if eps <= 0.0:
        raise DomainError("width must be positive")
    if spec is None:
        spec = input_grid(family, eps)
    kind = family.kind
    if kind == "curve_box":
        builder = rectangle(eps, abs(float(family.curve.eval(eps))))
    elif kind == "ball":
        builder = ball(family.delta * eps)
    elif kind == "adjoint_cylinder":
        builder = slab_product(family.delta * eps, 1.0, 1.0 + eps)
    elif kind == "tilted_box":
        builder = tilted_box(family.curve, eps)
    else:
        builder = curve_neighborhood(family.curve, eps, u=1.0, reflected=True)
    return build_indicator(builder, spec)


def _norm_ratio(family: ExtremizerFamily, pr: ExponentPair, eps: float,
                spec: GridSpec | None, quad: QuadratureSpec | None) -> float:
    qd = quad if quad is not None else _auto_quad(family, eps)
    ospec = spec if spec is not None else output_grid(family, eps)
    f = build_family(family, eps)
    curve = _operator_curve(family)
    if family.kind == "adjoint_cylinder":
        out = apply_adjoint(f, curve, ospec, qd)
        return (lp_norm(out, _exponent(1 - float(pr.inv_p)))
                / mixed_norm(f, _exponent(1 - float(pr.inv_q))))
    out = apply_average(f, curve, ospec, qd)
    if family.kind == "curve_tube":
        # single-dilation bound: the output norm is taken on the u = 1 slice
        slice_ = SampledField(ospec.plane_only(),
                              np.ascontiguousarray(out.values[:, :, 0]))
        return lp_norm(slice_, _exponent(pr.inv_q)) / lp_norm(f, _exponent(pr.inv_p))
    return mixed_norm(out, _exponent(pr.inv_q)) / lp_norm(f, _exponent(pr.inv_p))


def run_experiment(family: ExtremizerFamily, pair, eps_seq=None,
                   spec: GridSpec | None = None,
                   quad: QuadratureSpec | None = None,
                   workers: int | None = None) -> list:
    """Measure the norm ratio R(eps) over a strictly decreasing width
    sequence.  Widths below the family floor or whose thin dimension gets
    fewer than 4 input cells are dropped (and logged); at least four must
    survive.  Experiments across widths are independent, so workers > 1
    runs them on a thread pool."""
    pr = _coerce_pair(pair)
    seq = [float(e) for e in (eps_seq if eps_seq is not None
                              else default_eps_sequence(family.kind))]
    if not seq or any(e <= 0.0 for e in seq):
        raise DomainError("widths must be positive")
    if any(b >= a for a, b in zip(seq, seq[1:])):
        raise DomainError("widths must decrease strictly")
    floor = EPS_FLOORS[family.kind]
    kept, notes = [], []
    for e in seq:
        if e < floor:
            notes.append(f"eps={e:.3g}: below the {family.kind} floor "
                         f"{floor:.3g}")
            continue
        if spec is None and _thin_cells(family, e, input_grid(family, e)) < 4.0:
            notes.append(f"eps={e:.3g}: thin dimension under 4 input cells")
            continue
        kept.append(e)
    for note in notes:
        log.info("dropped %s", note)
    if len(kept) < 4:
        raise GridBudgetError(
            f"only {len(kept)} of {len(seq)} widths survive the resolution "
            f"guard ({'; '.join(notes)})")

    def one(e):
        return _norm_ratio(family, pr, e, spec, quad)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            ratios = list(pool.map(one, kept))
    else:
        ratios = [one(e) for e in kept]
    return list(zip(kept, ratios))


def fit_exponent(samples, predicted: float | None = None,
                 tolerance: float = DEFAULT_TOLERANCE) -> ScalingFit:
    """Ordinary least squares of log R against log eps.

    Needs at least four samples on a strictly decreasing geometric width
    sequence with positive ratios.  When a predicted exponent is supplied
    the fit is marked consistent if the slope does not exceed it by more
    than the tolerance (the constructions only bound R from below, so a
    smaller slope never contradicts them)."""
    pts = [(float(e), float(r)) for e, r in samples]
    if len(pts) < 4:
        raise DomainError("need at least four (eps, ratio) samples")
    eps = np.array([p[0] for p in pts])
    rat = np.array([p[1] for p in pts])
    if np.any(eps <= 0.0):
        raise DomainError("widths must be positive")
    if np.any(np.diff(eps) >= 0.0):
        raise DomainError("widths must be strictly decreasing")
    quot = eps[1:] / eps[:-1]
    if float(quot.max() / quot.min()) > 1.0 + 1e-6:
        raise DomainError("width sequence must be geometric")
    if np.any(rat <= 0.0) or not np.all(np.isfinite(rat)):
        raise DomainError("ratios must be positive and finite")
    x = np.log(eps)
    y = np.log(rat)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(pts) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    consistent = None
    if predicted is not None:
        consistent = bool(float(slope) <= float(predicted) + tolerance)
    return ScalingFit(samples=tuple(pts), slope=float(slope),
                      intercept=float(intercept), stderr=stderr,
                      predicted=None if predicted is None else float(predicted),
                      consistent=consistent)


def verdict(fit: ScalingFit, pair, curve: Curve, kind: str,
            tolerance: float = DEFAULT_TOLERANCE) -> SharpnessVerdict:
    """Judge a fitted exponent against the arithmetic prediction and the
    region classification: pairs outside the necessary region must blow
    up (clearly negative slope), pairs inside the sufficient region must
    stay bounded (slope not clearly negative)."""
    pr = _coerce_pair(pair)
    predicted = float(predicted_exponent(kind, pr, curve=curve))
    slope = float(fit.slope)
    matched = abs(slope - predicted) <= tolerance
    consistent = slope <= predicted + tolerance
    mode = "matched" if matched else (
        "lower_bound" if consistent else "inconsistent")
    in_nec = in_suf = None
    requirement = None
    region_ok = True
    om = curve_omega(curve)
    if om is not None and math.isfinite(float(om)):
        rv = region_verdict(pr, om)
        in_nec = bool(rv.in_necessary)
        in_suf = bool(rv.in_sufficient)
        if not in_nec:
            requirement = "blow_up"
            region_ok = slope <= -tolerance
        elif in_suf:
            requirement = "bounded"
            region_ok = slope >= -tolerance
    return SharpnessVerdict(
        kind=kind, inv_p=float(pr.inv_p), inv_q=float(pr.inv_q),
        slope=slope, stderr=float(fit.stderr), predicted=predicted,
        tolerance=tolerance, matched=matched, consistent=consistent,
        mode=mode, in_necessary=in_nec, in_sufficient=in_suf,
        region_requirement=requirement, region_consistent=bool(region_ok))


def measured_lower_constant(family: ExtremizerFamily, eps: float,
                            quad: QuadratureSpec | None = None) -> float:
    """Realized constant of the family's pointwise lower bound, measured
    instead of assumed.

    curve_box: min over the half-size box and all dilations of T(input)
    divided by eps.  ball: min over the half-width swept neighborhood of
    T(input) divided by the ball radius."""
    eps = float(eps)
    if eps <= 0.0:
        raise DomainError("width must be positive")
    f = build_family(family, eps)
    curve = _operator_curve(family)
    if family.kind == "curve_box":
        ge = abs(float(family.curve.eval(eps)))
        ospec = GridSpec((-eps / 2, eps / 2), (-ge / 2, ge / 2),
                         128, 128, (1.0, 2.0), 8)
        out = apply_average(f, curve, ospec,
                            quad if quad is not None else _auto_quad(family, eps))
        return float(out.values.min()) / eps
    if family.kind == "ball":
        rho = family.delta * eps
        glo, ghi = _gamma_range(curve)
        ospec = GridSpec((-0.2, 2.3), (2 * glo - 0.2, 2 * ghi + 0.3),
                         512, 512, (1.0, 2.0), 8)
        out = apply_average(f, curve, ospec,
                            quad if quad is not None else _auto_quad(family, eps))
        keep = ospec.x1_centers() >= 0.05  # same trim as the norm window
        worst = math.inf
        for c, u in enumerate(ospec.u_centers()):
            mask = build_indicator(
                curve_neighborhood(curve, rho / 2, u=float(u)),
                ospec.plane_only()).values > 0.0
            mask &= keep[:, None]
            if mask.any():
                worst = min(worst, float(out.values[:, :, c][mask].min()))
        if not math.isfinite(worst):
            raise DomainError("half-width neighborhood misses every cell "
                              "center; widen the grid or increase eps")
        return worst / rho
    raise DomainError(
        "pointwise lower-bound diagnostics exist for curve_box and ball only")
