"""Transform-domain quantities and growth-regime classification.

The long-time behaviour of Z(t) = E[exp(gamma L_t)] is governed by the Green
function G = int_0^inf p_s ds and the Laplace transform phat of the kernel:
above the threshold gamma_c = 1/G the growth rate is phat^{-1}(1/gamma) and
the prefactor involves the s-weighted transform, at the threshold the growth
is t over a (possibly truncated) mean, and below it Z converges to
1/(1 - gamma G).  All integrals over [0, inf) are split into a numerical head
and an analytic tail contribution from the kernel's declared tail model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .errors import NumericalError, PreconditionError
from .kernels import ConstantTail, ExponentialTail, PolynomialTail
from .quadrature import panel_quad

__all__ = [
    "LaplaceEvaluator",
    "AsymptoticsReport",
    "RateCurve",
    "laplace",
    "green_function",
    "hitting_moment",
    "growth_rate",
    "classify",
    "truncated_mean",
    "truncated_mean_profile",
    "survival_integral",
    "rate_curve",
    "srw_torus_rate",
    "torus_green",
    "write_report",
    "report_to_json",
    "write_rate_curve_csv",
    "CRITICAL_BAND",
]

CRITICAL_BAND = 1e-9         # |gamma*G - 1| within this band classifies critical
_TRUNCATION_TOL = 1e-14      # dropped-mass bound for weight-based cutoffs


# ---------------------------------------------------------------------------
# Weighted integrals of kernels over [0, inf)
# ---------------------------------------------------------------------------

def _tail_integral(tail, start, lam, power):
    """int_start^inf t^power * exp(-lam t) * tail(t) dt, analytically.

    Returns math.inf when the tail makes the integral diverge (only possible
    at lam = 0).
    """
    if tail is None:
        raise NumericalError("tail unresolved")
    if isinstance(tail, ExponentialTail):
        mu = lam + tail.rate
        if power == 0:
            return tail.amplitude * math.exp(-mu * start) / mu
        return tail.amplitude * math.exp(-mu * start) * (start / mu + 1.0 / mu**2)
    if isinstance(tail, ConstantTail):
        if tail.level == 0.0:
            return 0.0
        if lam <= 0.0:
            return math.inf
        if power == 0:
            return tail.level * math.exp(-lam * start) / lam
        return tail.level * math.exp(-lam * start) * (start / lam + 1.0 / lam**2)
    if isinstance(tail, PolynomialTail):
        alpha, c = tail.alpha, tail.amplitude
        if lam <= 0.0:
            if alpha <= power + 1.0:
                return math.inf
            return c * start ** (power + 1.0 - alpha) / (alpha - power - 1.0)
        val, _ = quad(lambda t: c * t ** (power - alpha) * math.exp(-lam * t),
                      start, math.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        return val
    raise TypeError("unknown tail model %r" % (tail,))


def _weight_cutoff(lam, power):
    """Smallest T with int_T^inf t^power e^{-lam t} dt below the drop tolerance."""
    if lam <= 0.0:
        return math.inf
    if power == 0:
        return max(0.0, -math.log(_TRUNCATION_TOL * lam) / lam)
    T = max(1.0 / lam, -math.log(_TRUNCATION_TOL * lam) / lam)
    for _ in range(6):
        bound = (T / lam + 1.0 / lam**2)
        T = max(T * 0.5, math.log(max(bound / _TRUNCATION_TOL, 2.0)) / lam)
    return T


@dataclass
class LaplaceEvaluator:
    """Weighted integrals int_0^inf t^power e^{-lam t} p_t dt for one kernel.

    The numerical head runs to the smaller of the kernel's tail onset and a
    weight-based cutoff (beyond which the integrand is below 1e-14 even with
    p = 1); past the onset the declared tail model is integrated analytically.
    ``tail_scale`` stretches the numerical region, which must not change any
    answer and is used by the refinement-invariance checks.
    """

    kernel: object
    rel_tol: float = 1e-11
    abs_tol: float = 1e-13
    tail_scale: float = 1.0

    def moment(self, lam, power=0):
        if lam < 0:
            raise PreconditionError("transform abscissa must be nonnegative")
        if power not in (0, 1):
            raise PreconditionError("only powers 0 and 1 are supported")
        kernel = self.kernel
        tail = kernel.tail
        onset = kernel.tail_start * self.tail_scale if tail is not None else math.inf
        cutoff = _weight_cutoff(lam, power)
        if tail is None:
            end = getattr(kernel, "grid", None)
            end = math.inf if end is None else float(end[-1])
            if cutoff > end:
                raise NumericalError("tail unresolved")
            t_cut = cutoff
            use_tail = False
        else:
            if lam == 0.0:
                divergent = (isinstance(tail, ConstantTail) and tail.level > 0.0) or (
                    isinstance(tail, PolynomialTail) and tail.alpha <= power + 1.0)
                if divergent:
                    return math.inf
            t_cut = min(onset, cutoff)
            use_tail = onset <= cutoff
        head = 0.0
        if t_cut > 0.0:
            def integrand(t):
                w = np.exp(-lam * t) if lam > 0.0 else np.ones_like(t)
                if power == 1:
                    w = w * t
                return w * self.kernel.values(t)

            breaks = [b for b in self.kernel.breakpoints if 0.0 < b < t_cut]
            head, _ = panel_quad(integrand, 0.0, t_cut, rel_tol=self.rel_tol,
                                 abs_tol=self.abs_tol, breakpoints=breaks)
        tail_part = _tail_integral(tail, t_cut, lam, power) if use_tail else 0.0
        return head + tail_part

    def transform(self, lam):
        """phat(lam) = int_0^inf e^{-lam t} p_t dt for lam > 0."""
        if lam <= 0:
            raise PreconditionError("Laplace abscissa must be positive")
        return self.moment(lam, 0)

    def green(self):
        return self.moment(0.0, 0)

    def hitting(self):
        return self.moment(0.0, 1)


def laplace(kernel, lam):
    """Laplace transform of the kernel at lam > 0, to ~1e-10 absolute."""
    return LaplaceEvaluator(kernel).transform(lam)


def green_function(kernel):
    """Green function int_0^inf p_s ds; math.inf when the integral diverges."""
    if kernel.tail is None:
        raise PreconditionError("kernel has no declared tail model")
    return LaplaceEvaluator(kernel).green()


def hitting_moment(kernel):
    """First moment int_0^inf s p_s ds; math.inf when it diverges."""
    if kernel.tail is None:
        raise PreconditionError("kernel has no declared tail model")
    return LaplaceEvaluator(kernel).hitting()


# ---------------------------------------------------------------------------
# Growth rate and regime classification
# ---------------------------------------------------------------------------

def growth_rate(kernel, gamma, rel_tol=1e-12, tail_scale=1.0):
    """Inverse transform phat^{-1}(1/gamma), i.e. the exponential growth rate.

    Returns 0 at and below the threshold gamma_c = 1/G.  Above it, phat is
    strictly decreasing with phat(0) = G > 1/gamma, so bisection on (0, hi]
    with hi = gamma (expanded geometrically if the endpoint sign is off)
    converges unconditionally.
    """
    if gamma <= 0:
        raise PreconditionError("gamma must be positive")
    if kernel.tail is None:
        raise PreconditionError("kernel has no declared tail model")
    evaluator = LaplaceEvaluator(kernel, tail_scale=tail_scale)
    G = evaluator.green()
    if math.isfinite(G) and gamma * G <= 1.0 + 1e-12:
        return 0.0
    target = 1.0 / gamma

    def f(lam):
        return evaluator.transform(lam) - target

    hi = gamma
    fhi = f(hi)
    expansions = 0
    while fhi > 0.0:
        expansions += 1
        if expansions > 200:
            raise NumericalError("bisection bracket expansion failed; kernel inconsistent")
        hi *= 2.0
        fhi = f(hi)
    if fhi == 0.0:
        return hi
    lo = 0.0  # phat(0+) = G > 1/gamma, so the root lies in (0, hi)
    for _ in range(500):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm > 0.0:
            lo = mid
        elif fm < 0.0:
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)


def survival_integral(kernel, s):
    """int_s^inf p_r dr, vectorized over s, without subtractive cancellation.

    For s past the tail onset the declared tail is integrated analytically;
    before it a numerical head over [s, onset] is added.
    """
    tail = kernel.tail
    if tail is None:
        raise PreconditionError("kernel has no declared tail model")
    onset = kernel.tail_start
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s_arr)
    tail_at_onset = _tail_integral(tail, max(onset, 0.0), 0.0, 0)
    for k, sk in enumerate(s_arr):
        if sk >= onset:
            out[k] = _tail_integral(tail, sk, 0.0, 0)
        else:
            head, _ = panel_quad(kernel.values, sk, onset,
                                 breakpoints=[b for b in kernel.breakpoints if sk < b < onset])
            out[k] = head + tail_at_onset
    return out if np.ndim(s) else float(out[0])


def truncated_mean(kernel, gamma, t):
    """Truncated mean m(t) = int_0^t (1 - int_0^s gamma p_r dr) ds at criticality.

    At the critical point the inner bracket equals gamma * int_s^inf p_r dr,
    which is how it is computed here (no cancellation); the classical display
    t / (gamma * int_0^t int_s^inf p dr ds) of the critical growth therefore
    equals t / m(t).
    """
    if t <= 0:
        raise PreconditionError("t must be positive")
    G = green_function(kernel)
    if not math.isfinite(G) or abs(gamma * G - 1.0) > CRITICAL_BAND:
        raise PreconditionError("truncated mean requires the critical regime gamma*G = 1")

    def integrand(s):
        return gamma * survival_integral(kernel, s)

    breaks = list(kernel.breakpoints) + [kernel.tail_start]
    val, _ = panel_quad(integrand, 0.0, float(t), rel_tol=1e-10, abs_tol=1e-12,
                        breakpoints=[b for b in breaks if 0.0 < b < t])
    return val


def truncated_mean_profile(kernel, gamma, times):
    """m(t) on an increasing grid starting at 0, via cumulative trapezoid."""
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise PreconditionError("profile grid must start at 0")
    from scipy.integrate import cumulative_trapezoid

    g = gamma * survival_integral(kernel, times)
    return cumulative_trapezoid(g, times, initial=0.0)


_REGIMES = ("subcritical", "critical", "supercritical")


@dataclass
class AsymptoticsReport:
    """Regime label plus the regime-specific constants of the growth law.

    Exactly one of the payload groups is populated: ``rate``/``prefactor``
    (supercritical), ``h_infinity`` plus the ``truncated_mean`` method
    (critical), or ``limit`` (subcritical).
    """

    gamma: float
    green: float
    regime: str
    rate: float | None = None
    prefactor: float | None = None
    h_infinity: float | None = None
    limit: float | None = None
    kernel: object = None

    def __post_init__(self):
        if self.regime not in _REGIMES:
            raise PreconditionError("unknown regime %r" % (self.regime,))
        populated = [self.rate is not None or self.prefactor is not None,
                     self.h_infinity is not None,
                     self.limit is not None]
        if sum(populated) != 1:
            raise PreconditionError("exactly one regime payload must be populated")

    def truncated_mean(self, t):
        """m(t) for the critical regime; errors off criticality."""
        if self.regime != "critical":
            raise PreconditionError("truncated mean is only defined at criticality")
        return truncated_mean(self.kernel, self.gamma, t)

    def predicted_critical_growth(self, t):
        """t / m(t), the critical growth prediction (equals the classical display)."""
        return t / self.truncated_mean(t)


def classify(kernel, gamma, tail_scale=1.0):
    """Regime of gamma against the threshold 1/G, with the regime's constants.

    gamma * G is compared to 1 inside a 1e-9 band so that exactly-critical
    constructions are not flipped by rounding; an infinite Green function puts
    every positive gamma in the supercritical regime.  ``tail_scale`` widens
    the numerical integration region without changing any answer (used by the
    tail-refinement invariance checks).
    """
    if gamma < 0:
        raise PreconditionError("gamma must be nonnegative")
    if kernel.tail is None:
        raise PreconditionError("kernel has no declared tail model")
    evaluator = LaplaceEvaluator(kernel, tail_scale=tail_scale)
    G = evaluator.green()
    if gamma == 0.0:
        return AsymptoticsReport(gamma=gamma, green=G, regime="subcritical",
                                 limit=1.0, kernel=kernel)
    if math.isfinite(G) and abs(gamma * G - 1.0) <= CRITICAL_BAND:
        H = evaluator.hitting()
        return AsymptoticsReport(gamma=gamma, green=G, regime="critical",
                                 h_infinity=H, kernel=kernel)
    if math.isfinite(G) and gamma * G < 1.0:
        return AsymptoticsReport(gamma=gamma, green=G, regime="subcritical",
                                 limit=1.0 / (1.0 - gamma * G), kernel=kernel)
    lam = growth_rate(kernel, gamma, tail_scale=tail_scale)
    weighted = evaluator.moment(lam, 1)
    prefactor = 1.0 / (lam * gamma * weighted)
    return AsymptoticsReport(gamma=gamma, green=G, regime="supercritical",
                             rate=lam, prefactor=prefactor, kernel=kernel)


# ---------------------------------------------------------------------------
# Rate curves
# ---------------------------------------------------------------------------

@dataclass
class RateCurve:
    """Sampled gamma -> r(gamma) with threshold/convexity/slope diagnostics."""

    gammas: np.ndarray
    rates: np.ndarray
    gamma_c: float
    second_diffs: np.ndarray
    convexity_ok: bool
    threshold_ok: bool
    slope_ratio: float


def rate_curve(kernel, gammas, threads=1):
    """Evaluate r(gamma) on a strictly increasing positive grid.

    Property results: divided second differences on the supercritical segment
    (convexity up to -1e-8), the sign pattern around gamma_c = 1/G, and the
    end-point slope ratio r(gamma_max)/gamma_max.
    """
    g = np.asarray(gammas, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise PreconditionError("gamma grid must be a nonempty 1-d array")
    if g[0] <= 0 or np.any(np.diff(g) <= 0):
        raise PreconditionError("gamma grid must be positive and strictly increasing")
    G = green_function(kernel)
    gamma_c = 0.0 if math.isinf(G) else 1.0 / G
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            r = np.asarray(list(pool.map(lambda x: growth_rate(kernel, x), g)))
    else:
        r = np.asarray([growth_rate(kernel, x) for x in g])
    # divided second differences over consecutive supercritical triples
    second = np.full(g.size, np.nan)
    super_idx = np.where(g > gamma_c * (1.0 + 1e-12) if gamma_c > 0 else g > 0)[0]
    for j in range(1, len(super_idx) - 1):
        i0, i1, i2 = super_idx[j - 1], super_idx[j], super_idx[j + 1]
        if i2 - i0 == 2:
            s1 = (r[i1] - r[i0]) / (g[i1] - g[i0])
            s2 = (r[i2] - r[i1]) / (g[i2] - g[i1])
            second[i1] = (s2 - s1) / (g[i2] - g[i0])
    finite = second[np.isfinite(second)]
    convexity_ok = bool(np.all(finite >= -1e-8)) if finite.size else True
    tol_r = 1e-10 * np.maximum(1.0, g)
    below = g <= gamma_c * (1.0 - 1e-12)
    above = g > gamma_c * (1.0 + 1e-12) if gamma_c > 0 else g > 0
    threshold_ok = bool(np.all(r[below] <= tol_r[below]) and np.all(r[above] > tol_r[above]))
    return RateCurve(gammas=g, rates=r, gamma_c=gamma_c, second_diffs=second,
                     convexity_ok=convexity_ok, threshold_ok=threshold_ok,
                     slope_ratio=float(r[-1] / g[-1]))


# ---------------------------------------------------------------------------
# Torus integral for the simple random walk
# ---------------------------------------------------------------------------

def _torus_mean(d, func, rel_tol=1e-8):
    """Mean of func(Phi) over the d-torus by per-axis panel doubling.

    Phi(s) = 2 * sum_i (1 - cos s_i); the uniform midpoint grid (which never
    samples s = 0) converges geometrically for smooth periodic integrands.
    """
    n = 8
    prev = None
    cap = 8192 if d == 1 else (2048 if d == 2 else 512)
    while True:
        s = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        one_minus_cos = 1.0 - np.cos(s)
        if d == 1:
            phi = 2.0 * one_minus_cos
        elif d == 2:
            phi = 2.0 * (one_minus_cos[:, None] + one_minus_cos[None, :])
        else:
            phi = 2.0 * (one_minus_cos[:, None, None] + one_minus_cos[None, :, None]
                         + one_minus_cos[None, None, :])
        val = float(np.mean(func(phi)))
        if prev is not None and abs(val - prev) <= rel_tol * abs(val):
            return val
        if n >= cap:
            raise NumericalError("torus quadrature did not converge at %d points per axis" % n)
        prev = val
        n *= 2


def torus_green(d, jump_rate=2.0):
    """Green function of the lattice difference walk, i.e. the torus mean of
    1/(nu * Phi) with nu = jump_rate/(2d).

    Infinite for d <= 2 (recurrent walk).  For d = 3 the integrand has an
    integrable singularity at s = 0 that defeats tensor-product refinement,
    so the equivalent time-domain representation is integrated instead: the
    walk's return probability is prod_i e^{-2 nu t} I_0(2 nu t), whose total
    integral equals the torus mean.
    """
    if d not in (1, 2, 3):
        raise PreconditionError("unsupported dimension: d must be one of {1, 2, 3}")
    if jump_rate <= 0:
        raise PreconditionError("jump rate must be positive")
    if d <= 2:
        return math.inf
    from scipy.special import ive

    nu = jump_rate / (2.0 * d)
    val, _ = quad(lambda u: ive(0, 2.0 * nu * u) ** d, 0.0, math.inf,
                  epsabs=1e-12, epsrel=1e-10, limit=400)
    return val


def srw_torus_rate(d, gamma, jump_rate=2.0, rel_tol=1e-10):
    """Growth rate of the lattice difference walk from the torus integral.

    Solves mean over the torus of 1/(r + nu * Phi(s)) = 1/gamma for r > 0,
    where nu = jump_rate/(2d) is the per-neighbour rate of the difference
    walk (total rate ``jump_rate``, default 2: two independent unit-rate
    walks).  The torus integral is the Laplace transform of the walk's return
    probability, so the root is the same growth rate computed by
    ``growth_rate`` on a (sufficiently wide) truncated difference-walk kernel.
    """
    if d not in (1, 2, 3):
        raise PreconditionError("unsupported dimension: d must be one of {1, 2, 3}")
    if gamma <= 0:
        raise PreconditionError("gamma must be positive")
    if jump_rate <= 0:
        raise PreconditionError("jump rate must be positive")
    nu = jump_rate / (2.0 * d)
    G = torus_green(d, jump_rate)
    if math.isfinite(G) and gamma * G <= 1.0 + 1e-12:
        raise PreconditionError("no supercritical root: gamma is at or below the walk threshold")
    target = 1.0 / gamma

    def phat(lam):
        return _torus_mean(d, lambda phi: 1.0 / (lam + nu * phi))

    hi = gamma
    fhi = phat(hi) - target
    expansions = 0
    while fhi > 0.0:
        expansions += 1
        if expansions > 200:
            raise NumericalError("bisection bracket expansion failed for the torus equation")
        hi *= 2.0
        fhi = phat(hi) - target
    if fhi == 0.0:
        return hi
    lo = 0.0
    for _ in range(500):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        fm = phat(mid) - target
        if fm > 0.0:
            lo = mid
        elif fm < 0.0:
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def report_to_json(report, config=None, extra=None):
    obj = {
        "gamma": report.gamma,
        "green": _num(report.green),
        "regime": report.regime,
        "rate": _num(report.rate),
        "prefactor": _num(report.prefactor),
        "h_infinity": _num(report.h_infinity),
        "limit": _num(report.limit),
    }
    if config is not None:
        obj["config"] = config
    if extra:
        obj.update(extra)
    return obj


def write_report(report, json_path=None, csv_path=None, config=None, extra=None):
    """Write the JSON report and/or its one-row CSV mirror."""
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps(report_to_json(report, config, extra), sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
    if csv_path is not None:
        def cell(x):
            return "" if x is None else ("inf" if isinstance(x, float) and math.isinf(x) else "%.17g" % x)

        lines = []
        if config is not None:
            lines.append("# config: %s" % json.dumps(config, sort_keys=True))
        lines.append("gamma,regime,rate,prefactor,limit")
        lines.append("%.17g,%s,%s,%s,%s" % (report.gamma, report.regime,
                                            cell(report.rate), cell(report.prefactor),
                                            cell(report.limit)))
        Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_rate_curve_csv(curve, path, include_identity=False, config=None):
    """Write gamma,r,second_diff rows (plus an identity column when asked)."""
    lines = []
    if config is not None:
        lines.append("# config: %s" % json.dumps(config, sort_keys=True))
    lines.append("# gamma_c=%s convexity_ok=%s threshold_ok=%s slope_ratio=%.17g"
                 % ("%.17g" % curve.gamma_c, curve.convexity_ok, curve.threshold_ok,
                    curve.slope_ratio))
    header = "gamma,r,second_diff"
    if include_identity:
        header += ",identity"
    lines.append(header)
    for k in range(curve.gammas.size):
        sd = curve.second_diffs[k]
        row = "%.17g,%.17g,%s" % (curve.gammas[k], curve.rates[k],
                                  "" if not np.isfinite(sd) else "%.17g" % sd)
        if include_identity:
            row += ",%.17g" % curve.gammas[k]
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
