"""Exponent-plane geometry for the averaging operator.

Points live in the unit square of (1/p, 1/q).  The sufficient region is a
trapezium with two open edges, together with two isolated boundary points,
intersected with an open half-plane that depends on the curve's flatness
exponent omega.  The necessary region is the closed version of those four
conditions.  A closed triangle describes the fixed-single-dilation region.

Rational inputs (int / Fraction) are compared exactly; floats use a fixed
tolerance of 1e-12 so that boundary classifications are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

import numpy as np

from .errors import DomainError, FlatCurveError

__all__ = [
    "ExponentPair",
    "RegionVerdict",
    "FAMILY_KINDS",
    "trapezium_contains",
    "triangle_contains",
    "line_condition",
    "sufficient_region_contains",
    "region_verdict",
    "necessary_region_contains",
    "predicted_exponent",
    "vertices",
    "classify_lattice",
    "LATTICE_COLUMNS",
]

Number = Union[int, float, Fraction]

_TOL = 1e-12

FAMILY_KINDS = ("curve_box", "ball", "adjoint_cylinder", "tilted_box", "curve_tube")


def _is_exact(*vals) -> bool:
    return all(isinstance(v, Rational) and not isinstance(v, bool) for v in vals)


@dataclass(frozen=True)
class ExponentPair:
    """A point (1/p, 1/q) in [0,1]^2; exact when both coordinates are rational."""

    inv_p: Number
    inv_q: Number

    def __post_init__(self):
        for v in (self.inv_p, self.inv_q):
            if not 0 <= v <= 1:
                raise DomainError("exponent coordinates must lie in [0, 1]")

    @property
    def exact(self) -> bool:
        return _is_exact(self.inv_p, self.inv_q)

    def as_floats(self) -> tuple:
        return float(self.inv_p), float(self.inv_q)

    def conjugate(self) -> "ExponentPair":
        """Swap to the dual exponents (1/p', 1/q') = (1 - 1/p, 1 - 1/q)."""
        return ExponentPair(1 - self.inv_p, 1 - self.inv_q)


def _coerce(pair) -> ExponentPair:
    if isinstance(pair, ExponentPair):
        return pair
    return ExponentPair(*pair)


def _le(a, b, exact: bool) -> bool:
    return a <= b if exact else float(a) <= float(b) + _TOL


def _lt(a, b, exact: bool) -> bool:
    return a < b if exact else float(a) < float(b) - _TOL


def _eq(a, b, exact: bool) -> bool:
    return a == b if exact else abs(float(a) - float(b)) <= _TOL


def trapezium_contains(pair) -> bool:
    """Membership in the trapezium: closed on the diagonal edges, open on
    1/q > 1/(3p) and 1/q > 1/p - 1/3."""
    pr = _coerce(pair)
    p, q = pr.inv_p, pr.inv_q
    ex = pr.exact
    third = Fraction(1, 3) if ex else 1.0 / 3.0
    return (_le(2 * p - 1, q, ex) and _le(q, p, ex)
            and _lt(third * p if ex else p / 3.0, q, ex)
            and _lt(p - third, q, ex))


def triangle_contains(pair) -> bool:
    """Closed triangle: 1/(2p) <= 1/q <= 1/p and 1/q >= 2/p - 1."""
    pr = _coerce(pair)
    p, q = pr.inv_p, pr.inv_q
    ex = pr.exact
    half = Fraction(1, 2) if ex else 0.5
    return (_le(half * p if ex else 0.5 * p, q, ex) and _le(q, p, ex)
            and _le(2 * p - 1, q, ex))


def line_condition(pair, omega: Number):
    """The affine flatness functional 1 + (1 + omega)(1/q - 1/p)."""
    if isinstance(omega, float) and math.isinf(omega):
        raise FlatCurveError("infinitely flat curve: no finite flatness line")
    pr = _coerce(pair)
    if pr.exact and _is_exact(omega):
        return 1 + (1 + Fraction(omega)) * (Fraction(pr.inv_q) - Fraction(pr.inv_p))
    return 1.0 + (1.0 + float(omega)) * (float(pr.inv_q) - float(pr.inv_p))


_O = (0, 0)
_D = (Fraction(2, 3), Fraction(1, 3))


def _is_special_point(pr: ExponentPair) -> bool:
    ex = pr.exact
    if _eq(pr.inv_p, _O[0], ex) and _eq(pr.inv_q, _O[1], ex):
        return True
    return _eq(pr.inv_p, _D[0], ex) and _eq(pr.inv_q, _D[1], ex)


def sufficient_region_contains(pair, omega: Number) -> bool:
    """(trapezium plus the two isolated boundary points) intersected with
    the open half-plane where the flatness functional is positive."""
    pr = _coerce(pair)
    line = line_condition(pr, omega)
    positive = line > 0 if pr.exact and _is_exact(omega) else float(line) > _TOL
    return positive and (trapezium_contains(pr) or _is_special_point(pr))


@dataclass
class RegionVerdict:
    """Classification of one exponent pair at a given flatness exponent."""

    pair: ExponentPair
    omega: Number
    in_trapezium: bool
    in_triangle: bool
    line_value: Number
    in_sufficient: bool
    in_necessary: bool
    violated_conditions: list

    def __bool__(self) -> bool:
        return self.in_necessary


def region_verdict(pair, omega: Number) -> RegionVerdict:
    """Evaluate the four closed necessary conditions and the strict
    sufficient region for one pair; lists the violated condition labels."""
    pr = _coerce(pair)
    p, q = pr.inv_p, pr.inv_q
    ex = pr.exact
    third = Fraction(1, 3) if ex else 1.0 / 3.0
    line = line_condition(pr, omega)
    violated = []
    line_ok = line >= 0 if ex and _is_exact(omega) else float(line) >= -_TOL
    if not line_ok:
        violated.append("(i)")
    if not (_le(2 * p - 1, q, ex) and _le(q, p, ex)):
        violated.append("(ii)")
    if not _le(third * p if ex else p / 3.0, q, ex):
        violated.append("(iii)")
    if not _le(p - third, q, ex):
        violated.append("(iv)")
    return RegionVerdict(
        pair=pr,
        omega=omega,
        in_trapezium=trapezium_contains(pr),
        in_triangle=triangle_contains(pr),
        line_value=line,
        in_sufficient=sufficient_region_contains(pr, omega),
        in_necessary=not violated,
        violated_conditions=violated,
    )


def necessary_region_contains(pair, omega: Number) -> RegionVerdict:
    """Alias of region_verdict; truthy exactly when all four closed
    conditions hold."""
    return region_verdict(pair, omega)


def predicted_exponent(kind: str, pair, curve=None, omega: Number | None = None):
    """Predicted log-log slope of the extremizer norm-ratio law R(eps).

    curve_box needs the curve's flatness exponent (pass curve or omega);
    the other four kinds are purely arithmetic in (1/p, 1/q).
    """
    pr = _coerce(pair)
    p, q = pr.inv_p, pr.inv_q
    if kind == "curve_box":
        if omega is None:
            if curve is None:
                raise DomainError("curve_box prediction needs a curve or omega")
            from .curves import omega as curve_omega
            omega = curve_omega(curve)
        return line_condition(pr, omega)
    if kind == "ball":
        return 1 + q - 2 * p
    if kind == "adjoint_cylinder":
        return 3 * q - p
    if kind == "tilted_box":
        return 1 + 3 * q - 3 * p
    if kind == "curve_tube":
        return 2 * q - p
    raise DomainError(f"unknown extremizer family kind {kind!r}; "
                      f"expected one of {FAMILY_KINDS}")


def vertices(omega: Number | None = None) -> dict:
    """Named vertices of the exponent regions, plus the intersections of
    the flatness line 1/q = 1/p - 1/(omega+1) with the trapezium boundary
    when omega >= 2 (labels E on the upper edge, F on the lower edge)."""
    pts = {
        "O": ExponentPair(0, 0),
        "A": ExponentPair(1, 1),
        "D": ExponentPair(Fraction(2, 3), Fraction(1, 3)),
        "C": ExponentPair(Fraction(1, 2), Fraction(1, 6)),
        "M": ExponentPair(Fraction(1, 4), Fraction(1, 4)),
    }
    if omega is not None and not (isinstance(omega, float) and math.isinf(omega)):
        if omega >= 2:
            if _is_exact(omega):
                c = Fraction(1) / (Fraction(omega) + 1)
                pts["E"] = ExponentPair(1 - c, 1 - 2 * c)
                pts["F"] = ExponentPair(3 * c / 2, c / 2)
            else:
                c = 1.0 / (float(omega) + 1.0)
                pts["E"] = ExponentPair(1.0 - c, 1.0 - 2.0 * c)
                pts["F"] = ExponentPair(1.5 * c, 0.5 * c)
    return pts


LATTICE_COLUMNS = ("inv_p", "inv_q", "in_trapezium", "in_triangle",
                   "line_value", "in_sufficient", "in_necessary")


def classify_lattice(omega: float, n: int = 200) -> dict:
    """Classify an n-by-n uniform lattice of the unit square.

    Returns a dict of flat arrays keyed by LATTICE_COLUMNS (row-major over
    the lattice, inv_q varying fastest).  Vectorized float path with the
    module's boundary tolerance.
    """
    if isinstance(omega, float) and math.isinf(omega):
        raise FlatCurveError("infinitely flat curve: no finite flatness line")
    if n < 2:
        raise DomainError("lattice needs at least 2 points per axis")
    w = float(omega)
    axis = np.linspace(0.0, 1.0, n)
    p, q = np.meshgrid(axis, axis, indexing="ij")
    p = p.ravel()
    q = q.ravel()
    trap = ((2 * p - 1 <= q + _TOL) & (q <= p + _TOL)
            & (q > p / 3 + _TOL) & (q > p - 1 / 3 + _TOL))
    line = 1.0 + (1.0 + w) * (q - p)
    special = ((np.abs(p) <= _TOL) & (np.abs(q) <= _TOL)) | \
              ((np.abs(p - 2 / 3) <= _TOL) & (np.abs(q - 1 / 3) <= _TOL))
    suff = (trap | special) & (line > _TOL)
    nec = ((line >= -_TOL) & (2 * p - 1 <= q + _TOL) & (q <= p + _TOL)
           & (q >= p / 3 - _TOL) & (q >= p - 1 / 3 - _TOL))
    tri = (p / 2 <= q + _TOL) & (q <= p + _TOL) & (q >= 2 * p - 1 - _TOL)
    return {
        "inv_p": p,
        "inv_q": q,
        "in_trapezium": trap,
        "in_triangle": tri,
        "line_value": line,
        "in_sufficient": suff,
        "in_necessary": nec,
    }
