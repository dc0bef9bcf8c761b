"""Model curve families gamma(t) on (0, 1] and their dyadic rescalings.

Every family evaluates gamma and its derivatives from closed forms, so
derivative values stay accurate down to t = 2^-40 and beyond.  The
rescaled curve of generation j <= 0 is

    G_j(t) = gamma(2^j t) / gamma(2^j),

whose k-th derivative is 2^(j k) gamma^(k)(2^j t) / gamma(2^j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    CurveParseError,
    DomainError,
    InvalidCurveError,
    UnsupportedOrderError,
)

__all__ = [
    "Curve",
    "RescaledCurve",
    "ConditionReport",
    "BracketReport",
    "OmegaEstimate",
    "SeriesResult",
    "power",
    "power_log",
    "polynomial",
    "power_sum",
    "named",
    "flat_exp",
    "parse_curve",
    "omega",
    "omega_estimate",
    "check_conditions",
    "rescale",
    "verify_rescaled_bounds",
    "dyadic_scaling_series",
    "NAMED_CURVES",
]

MAX_ORDER = 12

NAMED_CURVES = (
    "one_minus_sqrt",   # 1 - sqrt(1 - t^2)
    "t_sin",            # t sin t
    "t_minus_sin",      # t - sin t
    "one_minus_cos",    # 1 - cos t
    "exp_minus_linear",  # e^t - t - 1
)

_NAMED_OMEGA = {
    "one_minus_sqrt": 2.0,
    "t_sin": 2.0,
    "t_minus_sin": 3.0,
    "one_minus_cos": 2.0,
    "exp_minus_linear": 2.0,
}


def _falling(a: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= a - i
    return out


# ---------------------------------------------------------------------------
# per-family derivative evaluators (vectorised over t)

def _eval_power(d, t, k):
    c = _falling(d, k)
    if c == 0.0:
        return np.zeros_like(t)
    return c * t ** (d - k)


def _eval_polynomial(coeffs, t, k):
    dc = npoly.polyder(np.asarray(coeffs, dtype=float), k) if k else np.asarray(coeffs, float)
    if dc.size == 0:
        return np.zeros_like(t)
    return npoly.polyval(t, dc)


def _eval_power_sum(terms, t, k):
    out = np.zeros_like(t)
    for beta, alpha in terms:
        c = beta * _falling(alpha, k)
        if c != 0.0:
            out = out + c * t ** (alpha - k)
    return out


def _eval_power_log(d, t, k):
    # Leibniz on t^(d-1) * log(1+t)
    out = np.zeros_like(t)
    for i in range(k + 1):
        cf = math.comb(k, i) * _falling(d - 1.0, i)
        if cf == 0.0:
            continue
        m = k - i
        if m == 0:
            lg = np.log1p(t)
        else:
            lg = ((-1.0) ** (m - 1)) * math.factorial(m - 1) / (1.0 + t) ** m
        out = out + cf * t ** (d - 1.0 - i) * lg
    return out


_SQRT_Q: dict[int, np.ndarray] = {0: np.array([1.0])}


def _sqrt_poly(k: int) -> np.ndarray:
    # w = (1-t^2)^(1/2),  w^(k) = Q_k(t) (1-t^2)^(1/2-k)
    # Q_{k+1} = Q_k' (1-t^2) + (2k-1) t Q_k
    while k not in _SQRT_Q:
        m = max(_SQRT_Q)
        q = _SQRT_Q[m]
        nxt = npoly.polyadd(npoly.polymul(npoly.polyder(q), [1.0, 0.0, -1.0]),
                            npoly.polymul([0.0, 2.0 * m - 1.0], q))
        _SQRT_Q[m + 1] = nxt
    return _SQRT_Q[k]


def _eval_one_minus_sqrt(t, k):
    if k == 0:
        # cancellation-free form of 1 - sqrt(1 - t^2)
        return t * t / (1.0 + np.sqrt(np.maximum(1.0 - t * t, 0.0)))
    q = _sqrt_poly(k)
    base = 1.0 - t * t
    with np.errstate(divide="ignore", over="ignore"):
        w = npoly.polyval(t, q) * base ** (0.5 - k)
    return -w


# Taylor heads that avoid cancellation near t = 0:
# (t - sin t) / t^3       and  (e^t - t - 1) / t^2
_SIN_SERIES = np.array([(-1.0) ** k / math.factorial(2 * k + 3) for k in range(8)])
_EXP_SERIES = np.array([1.0 / math.factorial(k + 2) for k in range(14)])


def _eval_named(name, t, k):
    if name == "one_minus_sqrt":
        return _eval_one_minus_sqrt(t, k)
    if name == "t_sin":
        return t * np.sin(t + k * math.pi / 2) + k * np.sin(t + (k - 1) * math.pi / 2)
    if name == "t_minus_sin":
        if k == 0:
            return np.where(t < 0.5, t**3 * npoly.polyval(t * t, _SIN_SERIES),
                            t - np.sin(t))
        if k == 1:
            s = np.sin(0.5 * t)
            return 2.0 * s * s
        return -np.sin(t + k * math.pi / 2)
    if name == "one_minus_cos":
        if k == 0:
            s = np.sin(0.5 * t)
            return 2.0 * s * s
        return -np.cos(t + k * math.pi / 2)
    if name == "exp_minus_linear":
        if k == 0:
            return np.where(t < 0.5, t * t * npoly.polyval(t, _EXP_SERIES),
                            np.exp(t) - t - 1.0)
        if k == 1:
            return np.expm1(t)
        return np.exp(t)
    raise InvalidCurveError(f"unknown named curve {name!r}")


_FLAT_R: dict[float, dict[int, np.ndarray]] = {}


def _flat_poly(a: float, k: int) -> np.ndarray:
    # gamma = exp(-a/t), gamma^(k)(t) = exp(-a/t) R_k(1/t),
    # R_0 = 1, R_{k+1}(s) = s^2 (a R_k(s) - R_k'(s))
    cache = _FLAT_R.setdefault(a, {0: np.array([1.0])})
    while k not in cache:
        m = max(cache)
        r = cache[m]
        body = npoly.polysub(a * r, npoly.polyder(r) if r.size > 1 else np.zeros(1))
        cache[m + 1] = np.concatenate([[0.0, 0.0], body])
    return cache[k]


def _eval_flat_exp(a, t, k):
    s = 1.0 / t
    out = np.zeros_like(t)
    # past this cutoff exp(-a/t) * poly(1/t) underflows to 0 for any k <= MAX_ORDER
    ok = a * s < 700.0
    if np.any(ok):
        sv = s[ok]
        out[ok] = np.exp(-a * sv) * npoly.polyval(sv, _flat_poly(a, k))
    return out


@dataclass
class Curve:
    """A model curve gamma on (0, 1], with analytic derivatives.

    kind is one of power, power_log, polynomial, power_sum, named, flat_exp.
    The closed forms extend smoothly past t = 1 for every family except
    one_minus_sqrt; the extension is used by the dyadic rescalings only.
    """

    kind: str
    d: float = 0.0
    a: float = 0.0
    coeffs: tuple = ()
    terms: tuple = ()
    name: str = ""
    max_deriv_order: int = MAX_ORDER
    _monotone: bool | None = field(default=None, repr=False, compare=False)

    # -- evaluation --------------------------------------------------------
    @property
    def formula_tmax(self) -> float:
        return 1.0 if (self.kind == "named" and self.name == "one_minus_sqrt") else 2.0

    def eval(self, t, order: int = 0, extended: bool = False):
        """gamma^(order)(t) for t in (0, 1] (scalar or array).

        extended=True admits t up to the formula's natural reach past 1,
        which the rescaled curves need at generation j = 0.
        """
        if order < 0 or order > self.max_deriv_order:
            raise UnsupportedOrderError(
                f"order {order} outside 0..{self.max_deriv_order}")
        arr = np.asarray(t, dtype=float)
        tmax = self.formula_tmax if extended else 1.0
        if np.any(arr <= 0.0) or np.any(arr > tmax * (1.0 + 1e-12)):
            raise DomainError(f"t must lie in (0, {tmax}]")
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if self.kind == "power":
            out = _eval_power(self.d, arr, order)
        elif self.kind == "power_log":
            out = _eval_power_log(self.d, arr, order)
        elif self.kind == "polynomial":
            out = _eval_polynomial(self.coeffs, arr, order)
        elif self.kind == "power_sum":
            out = _eval_power_sum(self.terms, arr, order)
        elif self.kind == "named":
            out = _eval_named(self.name, arr, order)
        elif self.kind == "flat_exp":
            out = _eval_flat_exp(self.a, arr, order)
        else:
            raise InvalidCurveError(f"unknown curve kind {self.kind!r}")
        out = np.asarray(out, dtype=float)
        return float(out[0]) if scalar else out

    def __call__(self, t, order: int = 0):
        return self.eval(t, order)

    # -- structural properties --------------------------------------------
    @property
    def omega_analytic(self) -> float | None:
        """Flatness exponent when known in closed form, else None."""
        if self.kind == "power":
            return float(self.d)
        if self.kind == "power_log":
            return float(self.d)
        if self.kind == "polynomial":
            nz = [i for i, c in enumerate(self.coeffs) if c != 0.0]
            return float(min(nz)) if nz else None
        if self.kind == "power_sum":
            al = [alpha for beta, alpha in self.terms if beta != 0.0]
            return float(min(al)) if al else None
        if self.kind == "named":
            return _NAMED_OMEGA.get(self.name)
        if self.kind == "flat_exp":
            return math.inf
        return None

    @property
    def monotone_increasing(self) -> bool:
        if self._monotone is None:
            ts = np.geomspace(2.0 ** -40, 1.0, 256)
            d1 = self.eval(ts, 1)
            self._monotone = bool(np.all(d1 > 0.0))
        return self._monotone

    def label(self) -> str:
        if self.kind == "power":
            return f"kind=power d={_fmt(self.d)}"
        if self.kind == "power_log":
            return f"kind=power_log d={_fmt(self.d)}"
        if self.kind == "polynomial":
            return "kind=polynomial coeffs=" + ",".join(_fmt(c) for c in self.coeffs)
        if self.kind == "power_sum":
            return "kind=power_sum terms=" + ",".join(
                f"{_fmt(b)}:{_fmt(al)}" for b, al in self.terms)
        if self.kind == "named":
            return f"kind=named name={self.name}"
        if self.kind == "flat_exp":
            return f"kind=flat_exp a={_fmt(self.a)}"
        return f"kind={self.kind}"


def _fmt(x: float) -> str:
    xf = float(x)
    return str(int(xf)) if xf == int(xf) else repr(xf)


# ---------------------------------------------------------------------------
# constructors

def power(d: float) -> Curve:
    if not d > 0.0:
        raise InvalidCurveError("power exponent must be positive")
    return Curve("power", d=float(d))


def power_log(d: float) -> Curve:
    if not d > 1.0:
        raise InvalidCurveError("power_log requires d > 1")
    return Curve("power_log", d=float(d))


def polynomial(coeffs: Sequence[float]) -> Curve:
    cs = tuple(float(c) for c in coeffs)
    if not cs or all(c == 0.0 for c in cs):
        raise InvalidCurveError("polynomial needs a nonzero coefficient")
    if cs[0] != 0.0:
        raise InvalidCurveError("constant term must vanish so gamma(0+) = 0")
    return Curve("polynomial", coeffs=cs)


def power_sum(terms: Sequence[tuple]) -> Curve:
    ts = tuple((float(b), float(al)) for b, al in terms)
    if not ts:
        raise InvalidCurveError("power_sum needs at least one term")
    for b, al in ts:
        if b == 0.0 or al <= 0.0:
            raise InvalidCurveError("power_sum terms need beta != 0 and alpha > 0")
    return Curve("power_sum", terms=ts)


def named(name: str) -> Curve:
    if name not in NAMED_CURVES:
        raise InvalidCurveError(f"named curve must be one of {NAMED_CURVES}")
    return Curve("named", name=name)


def flat_exp(a: float) -> Curve:
    if not a > 0.0:
        raise InvalidCurveError("flat_exp rate must be positive")
    return Curve("flat_exp", a=float(a))


def parse_curve(text: str) -> Curve:
    """Parse a curve grammar string, e.g. ``kind=power d=2``.

    Grammar: space separated key=value pairs.  Recognised keys per kind:
    power/power_log take d, polynomial takes coeffs (ascending, comma
    separated), power_sum takes terms (beta:alpha pairs, comma separated),
    named takes name, flat_exp takes a.
    """
    kv = {}
    for tok in text.split():
        if "=" not in tok:
            raise CurveParseError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    kind = kv.pop("kind", None)
    if kind is None:
        raise CurveParseError("missing kind=")
    try:
        if kind == "power":
            return power(float(kv.pop("d")))
        if kind == "power_log":
            return power_log(float(kv.pop("d")))
        if kind == "polynomial":
            return polynomial([float(c) for c in kv.pop("coeffs").split(",")])
        if kind == "power_sum":
            terms = []
            for item in kv.pop("terms").split(","):
                b, sep, al = item.partition(":")
                if not sep:
                    raise ValueError(f"term {item!r} is not a coef:exponent pair")
                terms.append((float(b), float(al)))
            return power_sum(terms)
        if kind == "named":
            return named(kv.pop("name"))
        if kind == "flat_exp":
            return flat_exp(float(kv.pop("a")))
    except (KeyError, ValueError, InvalidCurveError) as exc:
        raise CurveParseError(f"bad parameters for kind={kind}: {exc}") from exc
    raise CurveParseError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# flatness exponent

@dataclass
class OmegaEstimate:
    value: float
    analytic: bool
    samples: list | None = None  # (k, ratio) pairs when numeric


def omega_estimate(curve: Curve, k_lo: int = 20, k_hi: int = 50) -> OmegaEstimate:
    """Numeric flatness exponent: max of log|gamma(2^-k)| / log(2^-k)."""
    ks = np.arange(k_lo, k_hi + 1)
    ts = 2.0 ** (-ks.astype(float))
    vals = np.abs(curve.eval(ts))
    if vals[-1] > 1e-6:
        raise InvalidCurveError("gamma does not vanish at 0+")
    with np.errstate(divide="ignore"):
        ratios = np.log(vals) / np.log(ts)  # log(0) -> -inf, ratio -> +inf
    samples = list(zip(ks.tolist(), ratios.tolist()))
    big = ratios > 1e3
    if np.any(big):
        half = len(ratios) // 2
        increasing = np.nanmax(ratios[half:]) >= np.nanmax(ratios[:half])
        if increasing or np.any(np.isinf(ratios)):
            return OmegaEstimate(math.inf, False, samples)
    return OmegaEstimate(float(np.max(ratios)), False, samples)


def omega(curve: Curve) -> float:
    """Flatness exponent of the curve (may be +inf)."""
    w = curve.omega_analytic
    if w is not None:
        return w
    return omega_estimate(curve).value


# ---------------------------------------------------------------------------
# curvature/growth conditions

@dataclass
class ConditionReport:
    """Sampled derivative-ratio constants of a curve.

    lower[j] is the sampled inf of |t^j gamma^(j)/gamma| (j = 1, 2),
    upper[j] the sampled sup for 1 <= j <= n_orders.  doubling is the
    sampled (min, max) of gamma(2t)/gamma(t) on (0, 1/2].
    """

    curve_label: str
    n_orders: int
    lower: dict
    upper: dict
    doubling: tuple
    monotone: bool
    underflow_fraction: float
    growth_flags: dict
    passed: bool
    failures: list

    def __bool__(self) -> bool:
        return self.passed


_INF_TOL = 1e-9


def check_conditions(curve: Curve, n_orders: int = 6, samples: int = 512,
                     t_min: float = 2.0 ** -40) -> ConditionReport:
    """Sample the two-sided derivative-ratio conditions on [t_min, 1].

    Fails when a lower constant degenerates, a sup is non finite or above
    a fixed cap, the sampled sup keeps growing as t -> 0, or gamma itself
    underflows on a nontrivial part of the grid (the infinitely flat case).
    """
    if samples < 64:
        raise DomainError("need at least 64 samples")
    if n_orders < 1 or n_orders > curve.max_deriv_order:
        raise DomainError("n_orders outside the supported derivative range")
    ts = np.geomspace(t_min, 1.0, samples)
    g0 = curve.eval(ts)
    valid = np.abs(g0) > 0.0
    underflow = 1.0 - valid.mean()
    lower: dict[int, float] = {}
    upper: dict[int, float] = {}
    growth: dict[int, bool] = {}
    failures: list[str] = []
    half = samples // 2
    for j in range(1, n_orders + 1):
        gj = curve.eval(ts, j)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = np.abs(ts ** j * gj / g0)
        ok = valid & np.isfinite(ratio)
        if not np.any(ok):
            failures.append(f"(ii) order {j}: no finite samples")
            upper[j] = math.inf
            growth[j] = True
            if j <= 2:
                lower[j] = 0.0
            continue
        sup = float(np.max(ratio[ok]))
        upper[j] = sup if np.all(ok[valid]) else math.inf
        deep = ratio[:half][ok[:half]]
        shallow = ratio[half:][ok[half:]]
        grows = (deep.size == 0 or shallow.size == 0 or
                 np.max(deep) > max(4.0 * np.max(shallow), np.max(shallow) + 2.0))
        growth[j] = bool(grows)
        if j <= 2:
            lower[j] = float(np.min(ratio[ok])) if np.any(ok) else 0.0
    for j in (1, 2):
        if j in lower and lower[j] <= _INF_TOL:
            failures.append(f"(i) order {j}: lower constant degenerates")
    for j in range(1, n_orders + 1):
        if not math.isfinite(upper.get(j, math.inf)):
            failures.append(f"(ii) order {j}: sup not bounded")
        elif growth.get(j):
            failures.append(f"(ii) order {j}: sup grows as t -> 0")
    if underflow > 0.1:
        failures.append("(ii): gamma underflows on the sampling grid")
    td = ts[ts <= 0.5]
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = curve.eval(2.0 * td) / curve.eval(td)
    drok = np.isfinite(dr) & (np.abs(curve.eval(td)) > 0.0)
    doubling = (float(np.min(dr[drok])), float(np.max(dr[drok]))) if np.any(drok) \
        else (math.nan, math.nan)
    mono = curve.monotone_increasing
    if not mono:
        failures.append("gamma not monotone increasing on the grid")
    return ConditionReport(
        curve_label=curve.label(),
        n_orders=n_orders,
        lower=lower,
        upper=upper,
        doubling=doubling,
        monotone=mono,
        underflow_fraction=float(underflow),
        growth_flags=growth,
        passed=not failures,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# rescaled curves

@dataclass
class RescaledCurve:
    """G_j(t) = gamma(2^j t)/gamma(2^j) on the unit window around t = 1."""

    base: Curve
    j: int
    scale: float
    gamma_at_scale: float

    @property
    def t_max(self) -> float:
        return self.base.formula_tmax / self.scale

    def eval(self, t, order: int = 0):
        arr = np.asarray(t, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr > self.t_max * (1.0 + 1e-12)):
            raise DomainError(f"rescaled argument outside (0, {self.t_max}]")
        val = self.base.eval(self.scale * arr, order, extended=True)
        return (self.scale ** order) * val / self.gamma_at_scale

    def __call__(self, t, order: int = 0):
        return self.eval(t, order)


def rescale(curve: Curve, j: int) -> RescaledCurve:
    """Rescaled curve of generation j (j <= 0)."""
    if j > 0:
        raise DomainError("generation index must satisfy j <= 0")
    sc = 2.0 ** j
    gs = curve.eval(sc)
    if gs == 0.0:
        raise InvalidCurveError(f"gamma(2^{j}) underflows; cannot rescale")
    return RescaledCurve(curve, int(j), sc, gs)


# ---------------------------------------------------------------------------
# uniform window brackets for rescaled curves

@dataclass
class BracketReport:
    """Window bounds on G_j and its derivatives, uniform over generations.

    Items: (i) value bracket, (ii) first derivative bracket, (iii) second
    derivative bracket, (iv) higher derivative caps, (v) boundedness of the
    derivatives of the inverse of G_j'.
    """

    curve_label: str
    j_range: tuple
    n_orders: int
    items: dict            # name -> bool
    extremes: dict         # name -> measured (min, max) or per-order dict
    inverse_sup: dict      # fd order -> sup over j and window
    composite_min_d2: float
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def _window_samples(rc: RescaledCurve, lo: float = 0.5, hi: float = 2.0,
                    n: int = 257) -> np.ndarray:
    # stay inside the base curve's own domain: 2^j t <= 1
    hi = min(hi, 1.0 / rc.scale)
    return np.linspace(lo, hi, n)


def _invert_d1(rc: RescaledCurve, s: float, lo: float, hi: float) -> float:
    # monotone bisection for G_j'(t) = s, then Newton polish
    f = lambda t: rc.eval(t, 1) - s
    a, b = lo, hi
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise DomainError("value outside the range of G_j' on the window")
    for _ in range(80):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if fa * fm < 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    t = 0.5 * (a + b)
    for _ in range(4):
        d2 = rc.eval(t, 2)
        if d2 == 0.0:
            break
        t_new = t - (rc.eval(t, 1) - s) / d2
        if lo <= t_new <= hi:
            t = t_new
    return t


def verify_rescaled_bounds(curve: Curve, j_range: Sequence[int],
                           report: ConditionReport | None = None,
                           n_orders: int = 6, samples: int = 257) -> BracketReport:
    """Check the uniform window brackets for G_j over the given generations.

    Brackets follow from the sampled constants: with L1 = lower[1],
    L2 = lower[2], Uk = upper[k] and E = exp(U1),

        1/E <= G_j <= E
        L1/(2E) <= |G_j'| <= 2 E U1
        L2/(4E) <= |G_j''| <= 4 E U2
        |G_j^(k)| <= 2^k E Uk   (2 <= k <= n_orders)

    and the inverse of G_j' has bounded derivatives (checked to order 3
    by centred finite differences on top of monotone root finding).
    """
    if report is None:
        report = check_conditions(curve, n_orders=n_orders)
    L1 = report.lower.get(1, 0.0)
    L2 = report.lower.get(2, 0.0)
    E = math.exp(report.upper.get(1, math.inf))
    slack = 1.0 + 1e-9
    items = {k: True for k in ("i", "ii", "iii", "iv", "v")}
    ext: dict = {
        "value": [math.inf, -math.inf],
        "d1": [math.inf, -math.inf],
        "d2": [math.inf, -math.inf],
        "higher": {k: 0.0 for k in range(2, n_orders + 1)},
    }
    inv_sup = {k: 0.0 for k in range(0, 4)}
    comp_min = math.inf
    for j in j_range:
        rc = rescale(curve, int(j))
        ts = _window_samples(rc, n=samples)
        g = rc.eval(ts)
        d1 = np.abs(rc.eval(ts, 1))
        d2 = np.abs(rc.eval(ts, 2))
        ext["value"] = [min(ext["value"][0], g.min()), max(ext["value"][1], g.max())]
        ext["d1"] = [min(ext["d1"][0], d1.min()), max(ext["d1"][1], d1.max())]
        ext["d2"] = [min(ext["d2"][0], d2.min()), max(ext["d2"][1], d2.max())]
        if g.min() * slack < 1.0 / E or g.max() > E * slack:
            items["i"] = False
        if (not d1.min() > 0.0 or d1.min() * slack < L1 / (2.0 * E)
                or d1.max() > 2.0 * E * report.upper[1] * slack):
            items["ii"] = False
        if (not d2.min() > 0.0 or d2.min() * slack < L2 / (4.0 * E)
                or d2.max() > 4.0 * E * report.upper[2] * slack):
            items["iii"] = False
        for k in range(2, n_orders + 1):
            dk = float(np.max(np.abs(rc.eval(ts, k))))
            ext["higher"][k] = max(ext["higher"][k], dk)
            if dk > (2.0 ** k) * E * report.upper[k] * slack:
                items["iv"] = False
        # (v): derivatives of the inverse of G_j' via root finding + FD
        lo, hi = ts[0], ts[-1]
        v_lo, v_hi = rc.eval(lo, 1), rc.eval(hi, 1)
        s_lo, s_hi = (v_lo, v_hi) if v_lo < v_hi else (v_hi, v_lo)
        h = 1e-3 * max(1.0, abs(s_hi))
        span = s_hi - s_lo
        if span <= 8.0 * h:
            items["v"] = False
            continue
        ss = np.linspace(s_lo + 3.0 * h, s_hi - 3.0 * h, 33)
        try:
            gv = np.array([[_invert_d1(rc, s + m * h, lo, hi) for m in (-2, -1, 0, 1, 2)]
                           for s in ss])
        except DomainError:
            items["v"] = False
            continue
        g0 = gv[:, 2]
        g1 = (gv[:, 3] - gv[:, 1]) / (2 * h)
        g2 = (gv[:, 3] - 2 * gv[:, 2] + gv[:, 1]) / h ** 2
        g3 = (gv[:, 4] - 2 * gv[:, 3] + 2 * gv[:, 1] - gv[:, 0]) / (2 * h ** 3)
        for k, arr in enumerate((g0, g1, g2, g3)):
            m = float(np.max(np.abs(arr)))
            inv_sup[k] = max(inv_sup[k], m)
            if not math.isfinite(m) or m > 1e6:
                items["v"] = False
        # composite second derivative: inf of |G_j''(t/u)| / u, t in [1/2, 4], u in [1, 2]
        su = np.linspace(0.25, min(4.0, 1.0 / rc.scale), 161)
        d2c = np.abs(rc.eval(su, 2))
        comp_min = min(comp_min, float(np.min(d2c) / 2.0))
    passed = all(items.values())
    return BracketReport(
        curve_label=curve.label(),
        j_range=(int(min(j_range)), int(max(j_range))),
        n_orders=n_orders,
        items=items,
        extremes=ext,
        inverse_sup=inv_sup,
        composite_min_d2=comp_min,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# dyadic norm series

@dataclass
class SeriesResult:
    convergent: bool
    value: float
    n_terms: int
    last_ratio: float
    js: list
    terms: list


def dyadic_scaling_series(curve: Curve, inv_p: float, inv_q: float,
                          j_min: int = -400, ratio_tol: float = 1e-3,
                          tail_len: int = 20) -> SeriesResult:
    """Partial sums of sum_j 2^j |2^j gamma(2^j)|^(1/q - 1/p) over j <= 0.

    Declares convergence when the last tail_len successive term ratios sit
    below 1 - ratio_tol, divergence when they fail to decay.  Terms are
    evaluated in log2 space so deep generations do not underflow.
    """
    delta = float(inv_q) - float(inv_p)
    if delta > 1e-12:
        raise DomainError("series requires 1/q <= 1/p")
    js, terms, log_terms = [], [], []
    total = 0.0
    ratios: list[float] = []
    j = 0
    while j >= j_min:
        g = abs(curve.eval(2.0 ** j))
        if g == 0.0:
            break
        log2_term = j + delta * (j + math.log2(g))
        term = 2.0 ** log2_term
        js.append(j)
        terms.append(term)
        log_terms.append(log2_term)
        total += term
        if len(log_terms) >= 2:
            ratios.append(2.0 ** (log_terms[-1] - log_terms[-2]))
        if not math.isfinite(term) or term > 1e300:
            return SeriesResult(False, math.inf, len(terms), ratios[-1] if ratios else math.inf,
                                js, terms)
        if len(ratios) >= tail_len and all(r >= 1.0 - ratio_tol for r in ratios[-tail_len:]):
            return SeriesResult(False, math.inf, len(terms), ratios[-1], js, terms)
        j -= 1
    last_ratio = ratios[-1] if ratios else 0.0
    tail = ratios[-tail_len:] if len(ratios) >= tail_len else ratios
    convergent = bool(tail) and all(r < 1.0 - ratio_tol for r in tail)
    value = total if convergent else math.inf
    return SeriesResult(convergent, value, len(terms), last_ratio, js, terms)
