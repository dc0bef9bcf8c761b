"""Stationary-phase diagnostics for the unit-scale curve average.

The frequency-side profile of one dyadic piece is the window integral
H(u, xi) of exp(-i u (xi1 t + xi2 G_j(t))) against the dyadic bump, with
G_j the rescaled curve.  This module locates the stationary point of the
phase, measures the |xi|^(-1/2) magnitude decay along admissible
directions, evaluates the Taylor-remainder factor of the phase, and checks
the curvature ranks of the induced outgoing phase function

    Psi(z, xi) = x . xi - u xi1 t0(xi) - u xi2 G_j(t0(xi)),  z = (x, u),

whose mixed z-xi Hessian, xi-Hessian, and cone Hessian carry the geometry
behind local smoothing: closed forms are cross-validated against central
finite differences at a normalized frequency before anything is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .averaging import QuadratureSpec, _window_quadrature, dyadic_bump
from .curves import Curve, check_conditions, rescale
from .errors import (AdmissibilityError, ConsistencyError, DomainError,
                     ResolutionError)

__all__ = [
    "PhasePoint",
    "CurvatureReport",
    "DecayFit",
    "admissible_ratio_window",
    "critical_point",
    "compute_H",
    "symbol_decay_fit",
    "curvature_check",
    "eta_remainder",
]

_T_LO = 0.5
_T_HI = 2.0
_NODES_PER_PERIOD = 32
_FD_STEP = 1e-4
_FD_TOL = 1e-5


@dataclass(frozen=True)
class PhasePoint:
    """Space-time point z = (x1, x2, u), frequency xi = (xi1, xi2) with
    opposite signs, and a non-positive generation index j."""

    z: tuple
    xi: tuple
    j: int

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        object.__setattr__(self, "xi", tuple(float(v) for v in self.xi))
        object.__setattr__(self, "j", int(self.j))
        if len(self.z) != 3 or not all(map(math.isfinite, self.z)):
            raise DomainError("phase point needs a finite (x1, x2, u) triple")
        if not 1.0 - 1e-9 <= self.z[2] <= 2.0 + 1e-9:
            raise DomainError("dilation parameter must lie in [1, 2]")
        if len(self.xi) != 2 or not all(map(math.isfinite, self.xi)):
            raise DomainError("frequency must be a finite pair")
        if self.xi[0] * self.xi[1] >= 0.0:
            raise AdmissibilityError(
                "stationary analysis needs frequency components of "
                "opposite signs")
        if self.j > 0:
            raise DomainError("generation index must satisfy j <= 0")


@dataclass
class CurvatureReport:
    """Closed-form curvature data of the outgoing phase at one point,
    cross-validated against finite differences.

    ranks counts singular values above 1e-8 times the largest one."""

    t0: float
    gauss: np.ndarray
    mixed_hessian: np.ndarray
    xi_hessian: np.ndarray
    cone_hessian: np.ndarray
    ranks: dict
    singular_values: dict
    fd_max_rel: float
    gauss_gradient_residual: float


@dataclass
class DecayFit:
    """Log-log fit of |H| against the frequency magnitude."""

    slope: float
    stderr: float
    expected: float
    lambdas: np.ndarray
    abs_values: np.ndarray


def admissible_ratio_window(curve: Curve) -> tuple:
    """Window of frequency ratios |xi1|/|xi2| the stationary analysis
    accepts, derived from the sampled first-derivative ratio constants."""
    rep = check_conditions(curve, n_orders=1, samples=256)
    c_lo, c_hi = rep.lower[1], rep.upper[1]
    if not (math.isfinite(c_hi) and c_hi > 0.0 and c_lo > 0.0):
        raise AdmissibilityError(
            "degenerate derivative-ratio constants; no admissible window")
    return c_lo / (10.0 * math.exp(c_hi)), 10.0 * math.exp(c_hi) * c_hi


def critical_point(curve: Curve, j: int, xi, *, tol: float = 1e-12) -> float:
    """Solve G_j'(t0) = -xi1/xi2 inside the open window (1/2, 2) by
    bisection plus a Newton polish; the residual is below tol."""
    xi1, xi2 = float(xi[0]), float(xi[1])
    if not (math.isfinite(xi1) and math.isfinite(xi2)) or xi2 == 0.0:
        raise DomainError("frequency must be finite with xi2 nonzero")
    if xi1 * xi2 >= 0.0:
        raise AdmissibilityError(
            "no stationary point: frequency components must have "
            "opposite signs")
    r = -xi1 / xi2
    w_lo, w_hi = admissible_ratio_window(curve)
    if not w_lo <= r <= w_hi:
        raise AdmissibilityError(
            f"frequency ratio {r:.6g} outside the admissible window "
            f"[{w_lo:.6g}, {w_hi:.6g}]")
    rc = rescale(curve, j)
    a, b = _T_LO, _T_HI
    fa = float(rc.eval(a, 1)) - r
    fb = float(rc.eval(b, 1)) - r
    if fa == 0.0 or fb == 0.0 or fa * fb > 0.0:
        raise AdmissibilityError(
            f"derivative never meets ratio {r:.6g} strictly inside "
            f"({_T_LO}, {_T_HI})")
    for _ in range(80):
        m = 0.5 * (a + b)
        fm = float(rc.eval(m, 1)) - r
        if fm == 0.0:
            a = b = m
            break
        if fa * fm < 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    t0 = 0.5 * (a + b)
    scale = max(1.0, abs(r))
    for _ in range(8):
        f = float(rc.eval(t0, 1)) - r
        if abs(f) <= tol * scale:
            break
        d = float(rc.eval(t0, 2))
        if d == 0.0:
            break
        step = f / d
        if not _T_LO < t0 - step < _T_HI:
            break
        t0 -= step
    if abs(float(rc.eval(t0, 1)) - r) > tol * scale:
        raise AdmissibilityError(
            f"stationary point solve stalled at residual above {tol:g}")
    if not _T_LO < t0 < _T_HI:
        raise AdmissibilityError("stationary point lies on the window edge")
    return float(t0)


def _max_derivative(rc) -> float:
    tt = np.linspace(_T_LO, _T_HI, 65)
    return float(np.max(np.abs(rc.eval(tt, 1))))


def compute_H(curve: Curve, j: int, u: float, xi,
              quad: QuadratureSpec | None = None) -> complex:
    """Window integral of exp(-i u (xi1 t + xi2 G_j(t))) weighted by the
    dyadic bump.  Needs at least 32 quadrature nodes per oscillation
    period; with quad=None the node count is chosen automatically."""
    u = float(u)
    if not 1.0 - 1e-9 <= u <= 2.0 + 1e-9:
        raise DomainError("dilation parameter must lie in [1, 2]")
    xi1, xi2 = float(xi[0]), float(xi[1])
    if not (math.isfinite(xi1) and math.isfinite(xi2)):
        raise DomainError("frequency must be finite")
    rc = rescale(curve, int(j))
    rate = abs(u) * (abs(xi1) + abs(xi2) * _max_derivative(rc))
    periods = (_T_HI - _T_LO) * rate / (2.0 * math.pi)
    needed = int(math.ceil(_NODES_PER_PERIOD * periods))
    if quad is None:
        quad = QuadratureSpec(nodes=max(512, needed))
    elif quad.nodes < needed:
        raise ResolutionError(
            f"this frequency needs at least {needed} quadrature nodes per "
            f"window, got {quad.nodes}")
    t, w = _window_quadrature(_T_LO, _T_HI, quad)
    phase = u * (xi1 * t + xi2 * np.asarray(rc.eval(t), dtype=np.float64))
    vals = np.exp(-1j * phase) * dyadic_bump(t) * w
    return complex(vals.sum())


def symbol_decay_fit(curve: Curve, j: int, u: float, direction, lambdas,
                     quad: QuadratureSpec | None = None) -> DecayFit:
    """Least-squares slope of log |H| against log lambda along a fixed
    frequency direction; stationary directions should give -1/2."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.size < 3 or np.any(lam <= 0.0):
        raise DomainError("need at least three positive magnitudes")
    lam = np.sort(lam)
    if lam[-1] / lam[0] < 100.0:
        raise DomainError("magnitude range must span at least two decades")
    d1, d2 = float(direction[0]), float(direction[1])
    nrm = math.hypot(d1, d2)
    if nrm == 0.0 or not math.isfinite(nrm):
        raise DomainError("direction must be a nonzero finite pair")
    d1, d2 = d1 / nrm, d2 / nrm
    absh = np.empty(lam.size)
    for i, lv in enumerate(lam):
        absh[i] = abs(compute_H(curve, j, u, (lv * d1, lv * d2), quad))
    if np.any(absh == 0.0):
        raise ResolutionError("profile magnitude underflowed along the sweep")
    x = np.log(lam)
    y = np.log(absh)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(lam.size - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return DecayFit(slope=float(slope), stderr=stderr, expected=-0.5,
                    lambdas=lam, abs_values=absh)


def _closed_forms(rc, u: float, xi1: float, xi2: float, t0: float):
    g0 = float(rc.eval(t0))
    g1 = float(rc.eval(t0, 1))
    g2 = float(rc.eval(t0, 2))
    if g2 == 0.0:
        raise AdmissibilityError(
            "second derivative vanishes at the stationary point")
    nrm = math.sqrt(t0 * t0 + g0 * g0 + 1.0)
    gauss = np.array([t0, g0, 1.0]) / nrm
    mixed = np.array([[1.0, 0.0, -t0], [0.0, 1.0, -g0]])
    dt1 = -1.0 / (xi2 * g2)
    dt2 = xi1 / (xi2 * xi2 * g2)
    core = np.array([[dt1, dt2], [g1 * dt1, g1 * dt2]])
    return gauss, mixed, -u * core, -(1.0 / nrm) * core


def _rank(mat: np.ndarray):
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > 1e-8 * sv[0])), sv


def curvature_check(curve: Curve, point: PhasePoint) -> CurvatureReport:
    """Closed-form Gauss direction and Hessians of the outgoing phase at
    the point, with ranks; every derivative entry is cross-validated
    against central finite differences at the normalized frequency."""
    x1, x2, u = point.z
    xi1, xi2 = point.xi
    t0 = critical_point(curve, point.j, point.xi)
    rc = rescale(curve, point.j)
    gauss, mixed, xi_hess, cone = _closed_forms(rc, u, xi1, xi2, t0)

    # validate at unit frequency scale, where the finite-difference step
    # is well conditioned; by degree-1 homogeneity this covers the raw
    # point (t0 is scale-invariant, the Hessians just rescale)
    s = math.hypot(xi1, xi2)
    e1, e2 = xi1 / s, xi2 / s
    _, mixed_n, xi_hess_n, cone_n = _closed_forms(rc, u, e1, e2, t0)

    def solve(p1, p2):
        return critical_point(curve, point.j, (p1, p2))

    def grad_z(p1, p2):
        tt = solve(p1, p2)
        return np.array([p1, p2, -p1 * tt - p2 * float(rc.eval(tt))])

    def psi(p1, p2):
        tt = solve(p1, p2)
        return (x1 * p1 + x2 * p2
                - u * (p1 * tt + p2 * float(rc.eval(tt))))

    def cone_val(p1, p2):
        return float(grad_z(p1, p2) @ gauss)

    h = _FD_STEP
    fd_mixed = np.vstack([(grad_z(e1 + h, e2) - grad_z(e1 - h, e2)) / (2 * h),
                          (grad_z(e1, e2 + h) - grad_z(e1, e2 - h)) / (2 * h)])

    def hess_fd(fn):
        out = np.empty((2, 2))
        out[0, 0] = (fn(e1 + h, e2) - 2.0 * fn(e1, e2) + fn(e1 - h, e2)) / h ** 2
        out[1, 1] = (fn(e1, e2 + h) - 2.0 * fn(e1, e2) + fn(e1, e2 - h)) / h ** 2
        cross = (fn(e1 + h, e2 + h) - fn(e1 + h, e2 - h)
                 - fn(e1 - h, e2 + h) + fn(e1 - h, e2 - h)) / (4.0 * h ** 2)
        out[0, 1] = out[1, 0] = cross
        return out

    fd_xi = hess_fd(psi)
    fd_cone = hess_fd(cone_val)

    def max_rel(a, b):
        return float(np.max(np.abs(a - b)
                            / np.maximum(1.0, np.maximum(np.abs(a),
                                                         np.abs(b)))))

    fd_err = max(max_rel(mixed_n, fd_mixed), max_rel(xi_hess_n, fd_xi),
                 max_rel(cone_n, fd_cone))
    if fd_err > _FD_TOL:
        raise ConsistencyError(
            f"closed-form Hessians deviate from finite differences by "
            f"{fd_err:.3e} (limit {_FD_TOL:g})")

    # the true gradient vanishes identically, so the residual is pure
    # finite-difference noise; 1e-6 balances truncation against roundoff
    gh = 1e-6
    grad_res = max(
        abs(cone_val(e1 + gh, e2) - cone_val(e1 - gh, e2)) / (2 * gh),
        abs(cone_val(e1, e2 + gh) - cone_val(e1, e2 - gh)) / (2 * gh))

    ranks, svs = {}, {}
    for name, mat in (("mixed", mixed), ("xi", xi_hess), ("cone", cone)):
        ranks[name], svs[name] = _rank(mat)
    return CurvatureReport(t0=t0, gauss=gauss, mixed_hessian=mixed,
                           xi_hessian=xi_hess, cone_hessian=cone,
                           ranks=ranks, singular_values=svs,
                           fd_max_rel=fd_err,
                           gauss_gradient_residual=float(grad_res))


def eta_remainder(curve: Curve, j: int, t: float, t0: float) -> float:
    """Taylor-remainder factor of the phase around the stationary point:
    half the second derivative at t0 plus the integral remainder, so that
    phase(t0 + t) - phase(t0) = -u xi2 t^2 eta for critical (xi1, xi2)."""
    rc = rescale(curve, int(j))
    t = float(t)
    t0 = float(t0)
    t_max = rc.t_max * (1.0 + 1e-12)
    if not (0.0 < t0 <= t_max and 0.0 < t0 + t <= t_max):
        raise DomainError(
            "evaluation interval leaves the curve's derivative window")
    half = 0.5 * float(rc.eval(t0, 2))
    if t == 0.0:
        return half
    theta, w = _window_quadrature(0.0, 1.0, QuadratureSpec(nodes=128))
    third = np.asarray(rc.eval(theta * t + t0, 3), dtype=np.float64)
    return half + 0.5 * t * float(np.sum(w * (1.0 - theta) ** 2 * third))
