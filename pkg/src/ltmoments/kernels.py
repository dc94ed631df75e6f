"""Sources of the return probability p_t(i,i) of a continuous-time Markov chain.

Every downstream computation consumes a return kernel: finite-state generator
matrices evaluated by uniformization, closed-form families used as analytic
oracles, tabulated data with linear interpolation, and a builder for the
lattice difference walk.  Each kernel evaluates t -> p_t(i,i) on arrays of
time points and declares a large-time tail model so that integrals over
[0, infinity) can be completed analytically.  The exact-event path simulator
used by the Monte Carlo cross-checks also lives here.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from .errors import NumericalError, PreconditionError

__all__ = [
    "GeneratorMatrix",
    "ExponentialTail",
    "PolynomialTail",
    "ConstantTail",
    "ReturnKernel",
    "ConstantOne",
    "PureEscape",
    "TwoState",
    "PolyTail",
    "CtmcKernel",
    "TabulatedKernel",
    "CLOSED_FORM_FAMILIES",
    "build_difference_walk",
    "evaluate_kernel",
    "LocalTimeSimulator",
    "simulate_local_time",
    "load_generator",
    "generator_to_json",
    "load_tabulated",
    "tail_from_json",
    "tail_to_json",
]


# ---------------------------------------------------------------------------
# Tail models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialTail:
    """p_t ~ amplitude * exp(-rate * t) beyond the kernel's tail start."""

    rate: float
    amplitude: float

    def __post_init__(self):
        if self.rate <= 0 or self.amplitude < 0:
            raise PreconditionError("exponential tail needs rate > 0 and amplitude >= 0")

    def value(self, t):
        return self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class PolynomialTail:
    """p_t ~ amplitude * t**(-alpha) beyond the kernel's tail start."""

    alpha: float
    amplitude: float

    def __post_init__(self):
        if self.alpha <= 0 or self.amplitude <= 0:
            raise PreconditionError("polynomial tail needs alpha > 0 and amplitude > 0")

    def value(self, t):
        return self.amplitude * np.asarray(t, dtype=float) ** (-self.alpha)


@dataclass(frozen=True)
class ConstantTail:
    """p_t ~ level (stationary mass at the distinguished state)."""

    level: float

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise PreconditionError("constant tail level must lie in [0, 1]")

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.level)


def tail_to_json(tail):
    """JSON-friendly dict for a tail model (None stays None)."""
    if tail is None:
        return {"kind": "none"}
    if isinstance(tail, ExponentialTail):
        return {"kind": "exp", "rate": tail.rate, "c": tail.amplitude}
    if isinstance(tail, PolynomialTail):
        return {"kind": "poly", "alpha": tail.alpha, "c": tail.amplitude}
    if isinstance(tail, ConstantTail):
        return {"kind": "const", "level": tail.level}
    raise TypeError("unknown tail model %r" % (tail,))


def tail_from_json(obj):
    if obj is None:
        return None
    kind = obj.get("kind", "none")
    if kind == "none":
        return None
    if kind == "exp":
        return ExponentialTail(float(obj["rate"]), float(obj.get("c", 1.0)))
    if kind == "poly":
        return PolynomialTail(float(obj["alpha"]), float(obj.get("c", 1.0)))
    if kind == "const":
        return ConstantTail(float(obj["level"]))
    raise PreconditionError("unknown tail kind %r" % (kind,))


# ---------------------------------------------------------------------------
# Generator matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Conservative rate matrix of a finite continuous-time Markov chain.

    Parameters
    ----------
    states : sequence
        State labels, in matrix order.
    rates : (n, n) array_like
        Off-diagonal entries are transition rates (>= 0); each diagonal entry
        is minus its row's off-diagonal sum, so rows sum to zero.
    origin : int
        Index of the distinguished state whose local time is studied.
    """

    states: tuple
    rates: np.ndarray
    origin: int = 0

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise PreconditionError("rate matrix must be square")
        n = rates.shape[0]
        if n < 1:
            raise PreconditionError("generator needs at least one state")
        states = tuple(self.states) if self.states else tuple(range(n))
        if len(states) != n:
            raise PreconditionError("state labels and rate matrix size disagree")
        scale = np.maximum(np.abs(rates).max(axis=1), 1.0)
        off = rates.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < -1e-12 * scale[:, None]):
            raise PreconditionError("off-diagonal rates must be nonnegative")
        row_sums = rates.sum(axis=1)
        if np.any(np.abs(row_sums) > 1e-12 * scale):
            raise PreconditionError("generator rows must sum to zero")
        if not 0 <= int(self.origin) < n:
            raise PreconditionError("distinguished state index out of bounds")
        rates.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "origin", int(self.origin))

    @property
    def n_states(self):
        return self.rates.shape[0]

    @property
    def exit_rates(self):
        """Total jump rate out of each state."""
        return np.clip(-np.diag(self.rates), 0.0, None)


def load_generator(source):
    """Build a GeneratorMatrix from a JSON document.

    Accepts a dict, a JSON string, or a path to a JSON file with fields
    {"states": [...], "rates": [[...]], "origin": k}; "states" and "origin"
    are optional.
    """
    obj = _json_object(source)
    rates = obj["rates"]
    states = obj.get("states") or tuple(range(len(rates)))
    states = tuple(tuple(s) if isinstance(s, list) else s for s in states)
    return GeneratorMatrix(states=states, rates=rates, origin=int(obj.get("origin", 0)))


def generator_to_json(gen):
    states = [list(s) if isinstance(s, tuple) else s for s in gen.states]
    return {"states": states, "rates": gen.rates.tolist(), "origin": gen.origin}


def _json_object(source):
    if isinstance(source, dict):
        return source
    if isinstance(source, (str, Path)):
        text = str(source)
        if text.lstrip().startswith("{"):
            return json.loads(text)
        return json.loads(Path(source).read_text(encoding="utf-8"))
    raise PreconditionError("expected a dict, JSON string, or file path")


def build_difference_walk(d, radius, boundary="reflecting"):
    """Generator of the rate-doubled simple random walk on {-R..R}^d.

    The difference of two independent simple random walks (each with total
    jump rate 1 split over its 2d neighbours) is a walk with total rate 2,
    i.e. per-neighbour rate 1/d.  The countable lattice is truncated to a box;
    with ``boundary="reflecting"`` outward jumps are suppressed (the generator
    stays conservative), with ``boundary="absorbing"`` outward rates are routed
    to an explicit cemetery state.

    Returns a GeneratorMatrix whose distinguished state is the origin.
    """
    if d not in (1, 2, 3):
        raise PreconditionError("unsupported dimension: d must be one of {1, 2, 3}")
    radius = int(radius)
    if radius < 1:
        raise PreconditionError("box radius must be a positive integer")
    if boundary not in ("reflecting", "absorbing"):
        raise PreconditionError("boundary must be 'reflecting' or 'absorbing'")
    per_neighbour = 1.0 / d
    points = list(itertools.product(range(-radius, radius + 1), repeat=d))
    index = {pt: k for k, pt in enumerate(points)}
    n = len(points)
    absorbing = boundary == "absorbing"
    size = n + 1 if absorbing else n
    rates = np.zeros((size, size))
    cemetery = n
    for pt, k in index.items():
        for axis in range(d):
            for step in (-1, 1):
                nb = list(pt)
                nb[axis] += step
                nb = tuple(nb)
                if nb in index:
                    rates[k, index[nb]] += per_neighbour
                elif absorbing:
                    rates[k, cemetery] += per_neighbour
    np.fill_diagonal(rates, 0.0)
    rates[np.arange(size), np.arange(size)] = -rates.sum(axis=1)
    states = list(points)
    if absorbing:
        states.append("absorbed")
    return GeneratorMatrix(states=tuple(states), rates=rates, origin=index[(0,) * d])


# ---------------------------------------------------------------------------
# Uniformization
# ---------------------------------------------------------------------------

_DENSE_LIMIT = 512           # above this many states the jump matrix is kept sparse
_POISSON_TAIL = 1e-13        # truncation mass for the Poisson series


class _ReturnProbSeries:
    """Return probabilities of the embedded jump chain, extended on demand.

    Uniformization writes p_t(i,i) as a Poisson(lam*t) mixture of the powers
    (P^n)_{ii} with P = I + Q/lam.  The rate lam = 2*max exit rate keeps a
    positive diagonal, so the power sequence converges without parity
    oscillation; powers are cached across evaluations.
    """

    def __init__(self, gen, state):
        exit_rates = gen.exit_rates
        self.lam = 2.0 * float(exit_rates.max()) if exit_rates.size else 0.0
        self.state = state
        n = gen.n_states
        if self.lam > 0.0:
            P = np.eye(n) + gen.rates / self.lam
            P = np.clip(P, 0.0, None)
            if n > _DENSE_LIMIT:
                self._PT = sparse.csr_matrix(P).T.tocsr()
                self._P = None
            else:
                self._P = P
                self._PT = None
            v = np.zeros(n)
            v[state] = 1.0
            self._v = v
        self._powers = [1.0]

    def _extend(self, n_terms):
        while len(self._powers) <= n_terms:
            if self._P is not None:
                self._v = self._v @ self._P
            else:
                self._v = self._PT @ self._v
            self._powers.append(float(self._v[self.state]))

    def __call__(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if self.lam == 0.0:
            return np.ones_like(t)
        mu = self.lam * t
        mu_max = float(mu.max())
        n_max = int(math.ceil(mu_max + 12.0 * math.sqrt(mu_max) + 30.0))
        self._extend(n_max)
        a = np.asarray(self._powers[: n_max + 1])
        k = np.arange(n_max + 1, dtype=float)
        log_fact = gammaln(k + 1.0)
        out = np.empty_like(t)
        block = max(1, int(4_000_000 // (n_max + 1)))
        for lo in range(0, t.size, block):
            m = mu[lo:lo + block, None]
            positive = m[:, 0] > 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                logw = k[None, :] * np.log(m) - m - log_fact[None, :]
            w = np.exp(logw, where=np.isfinite(logw), out=np.zeros_like(logw))
            vals = w @ a
            vals[~positive] = 1.0
            out[lo:lo + block] = vals
        return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Return kernels
# ---------------------------------------------------------------------------

class ReturnKernel:
    """Common interface of every p_t(i,i) source.

    Subclasses provide ``values`` (vectorized evaluation), a ``tail`` model
    with its onset ``tail_start``, optional smoothness ``breakpoints`` for the
    quadrature machinery, and a short ``label``.
    """

    breakpoints = ()

    def values(self, times):
        raise NotImplementedError

    @property
    def tail(self):
        raise NotImplementedError

    @property
    def tail_start(self):
        raise NotImplementedError

    @property
    def label(self):
        return type(self).__name__

    def __repr__(self):
        return "<%s>" % self.label


@dataclass(frozen=True)
class ConstantOne(ReturnKernel):
    """p_t = 1: the chain never leaves the distinguished state."""

    def values(self, times):
        return np.ones_like(np.atleast_1d(np.asarray(times, dtype=float)))

    @property
    def tail(self):
        return ConstantTail(1.0)

    @property
    def tail_start(self):
        return 0.0

    @property
    def label(self):
        return "constant-one"


@dataclass(frozen=True)
class PureEscape(ReturnKernel):
    """p_t = exp(-q t): escape at rate q with no return."""

    q: float

    def __post_init__(self):
        if self.q <= 0:
            raise PreconditionError("escape rate q must be positive")

    def values(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        return np.exp(-self.q * t)

    @property
    def tail(self):
        return ExponentialTail(self.q, 1.0)

    @property
    def tail_start(self):
        return 0.0

    @property
    def label(self):
        return "pure-escape:q=%g" % self.q


@dataclass(frozen=True)
class TwoState(ReturnKernel):
    """p_t = b/(a+b) + a/(a+b) * exp(-(a+b) t), the two-state chain return law.

    Rate a leaves the distinguished state, rate b returns to it.
    """

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise PreconditionError("two-state rates a, b must be positive")

    def values(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        ab = self.a + self.b
        return self.b / ab + (self.a / ab) * np.exp(-ab * t)

    @property
    def tail(self):
        return ConstantTail(self.b / (self.a + self.b))

    @property
    def tail_start(self):
        # Onset where the decaying component drops below ~1e-14.
        ab = self.a + self.b
        return (math.log(self.a / ab) + 32.3) / ab

    @property
    def label(self):
        return "two-state:a=%g,b=%g" % (self.a, self.b)


@dataclass(frozen=True)
class PolyTail(ReturnKernel):
    """p_t = 1 for t < t0, then c * t**(-alpha) with c = t0**alpha.

    The amplitude is pinned by continuity at t0, which also keeps the kernel
    inside [0, 1].
    """

    alpha: float
    t0: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise PreconditionError("tail exponent alpha must be positive")
        if self.t0 <= 0:
            raise PreconditionError("splice time t0 must be positive")

    @property
    def amplitude(self):
        return self.t0 ** self.alpha

    def values(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.ones_like(t)
        late = t > self.t0
        out[late] = self.amplitude * t[late] ** (-self.alpha)
        return out

    @property
    def tail(self):
        return PolynomialTail(self.alpha, self.amplitude)

    @property
    def tail_start(self):
        return self.t0

    @property
    def breakpoints(self):
        return (self.t0,)

    @property
    def label(self):
        return "poly-tail:alpha=%g,t0=%g" % (self.alpha, self.t0)


CLOSED_FORM_FAMILIES = {
    "constant-one": ConstantOne,
    "pure-escape": PureEscape,
    "two-state": TwoState,
    "poly-tail": PolyTail,
}


class CtmcKernel(ReturnKernel):
    """p_t(i,i) of a finite-state chain, evaluated by uniformization.

    The Poisson series is truncated when its remaining mass is below 1e-13,
    giving an absolute evaluation error well under 1e-12.  The large-time tail
    is detected on first use: the return probability is sampled at doubling
    times until two large times agree to 1e-8, a constant level is extracted
    by Aitken extrapolation when positive (recurrent truncation), and an
    exponential decay is fitted otherwise (absorbing truncation).
    """

    def __init__(self, generator, state=None, tail="auto", tail_start=None):
        self.generator = generator
        self.state = generator.origin if state is None else int(state)
        if not 0 <= self.state < generator.n_states:
            raise PreconditionError("kernel state index out of bounds")
        self._series = _ReturnProbSeries(generator, self.state)
        if tail == "auto":
            self._tail_info = None
        else:
            if tail is not None and tail_start is None:
                raise PreconditionError("explicit tail model needs a tail_start")
            self._tail_info = (tail, math.inf if tail_start is None else float(tail_start))

    def values(self, times):
        return self._series(np.asarray(times, dtype=float))

    def _detect_tail(self):
        lam = self._series.lam
        if lam == 0.0:
            return ConstantTail(1.0), 0.0
        T = max(1.0, 8.0 / lam)
        for _ in range(48):
            p1, p15, p2 = self.values(np.array([T, 1.5 * T, 2.0 * T]))
            if abs(p2 - p1) < 1e-8:
                return self._fit_tail(T, p1, p15, p2)
            T *= 2.0
        raise NumericalError("kernel tail not resolved within the scan budget")

    def _fit_tail(self, T, p1, p15, p2):
        d1 = p15 - p1
        d2 = p2 - p15
        level = p2
        onset = 2.0 * T
        if abs(d1) > 1e-15 and abs(d2 - d1) > 1e-18:
            level = p2 - d2 * d2 / (d2 - d1)
            ratio = d2 / d1
            if 1e-12 < ratio < 0.999999:
                decay = -math.log(ratio) / (0.5 * T)
                dev = abs(p2 - level)
                if dev > 0.0:
                    onset = 2.0 * T + max(0.0, math.log(dev / 1e-12) / decay)
        if level > 1e-7:
            return ConstantTail(min(max(level, 0.0), 1.0)), onset
        # Decay towards zero: fit an exponential through the two sample times.
        if p2 <= 1e-250 or p1 <= p2:
            return ConstantTail(0.0), 2.0 * T
        rate = math.log(p1 / p2) / T
        amplitude = p1 * math.exp(rate * T)
        return ExponentialTail(rate, amplitude), T

    def _tail_pair(self):
        if self._tail_info is None:
            self._tail_info = self._detect_tail()
        return self._tail_info

    @property
    def tail(self):
        return self._tail_pair()[0]

    @property
    def tail_start(self):
        return self._tail_pair()[1]

    @property
    def label(self):
        return "ctmc:n=%d,state=%d" % (self.generator.n_states, self.state)


class TabulatedKernel(ReturnKernel):
    """Linear interpolation of sampled p_t values, extended by a tail model.

    The grid must be strictly increasing and start at zero; evaluation beyond
    the grid uses the declared tail, and is refused when no tail is declared.
    """

    def __init__(self, times, values, tail=None):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise PreconditionError("tabulated kernel needs matching 1-d grids of length >= 2")
        if abs(t[0]) > 1e-12:
            raise PreconditionError("tabulated grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise PreconditionError("tabulated grid must be strictly increasing")
        if np.any((v < -1e-12) | (v > 1.0 + 1e-12)):
            raise PreconditionError("tabulated values must lie in [0, 1]")
        t = t.copy()
        t[0] = 0.0
        self.grid = t
        self.grid_values = np.clip(v, 0.0, 1.0)
        self._tail = tail

    def values(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.interp(t, self.grid, self.grid_values)
        beyond = t > self.grid[-1]
        if np.any(beyond):
            if self._tail is None:
                raise PreconditionError("kernel undefined beyond grid")
            out[beyond] = np.clip(self._tail.value(t[beyond]), 0.0, 1.0)
        return out

    @property
    def tail(self):
        return self._tail

    @property
    def tail_start(self):
        return float(self.grid[-1])

    @property
    def breakpoints(self):
        return tuple(self.grid[1:-1])

    @property
    def label(self):
        return "tabulated:n=%d" % self.grid.size


def load_tabulated(source):
    """Build a TabulatedKernel from {"times": [...], "values": [...], "tail": {...}}."""
    obj = _json_object(source)
    return TabulatedKernel(obj["times"], obj["values"], tail_from_json(obj.get("tail")))


def evaluate_kernel(kernel, times):
    """Evaluate p_t(i,i) on a strictly increasing array of nonnegative times."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.size == 0:
        return np.empty(0)
    if not np.all(np.isfinite(t)):
        raise PreconditionError("time points must be finite")
    if t[0] < 0:
        raise PreconditionError("time points must be nonnegative")
    if np.any(np.diff(t) <= 0):
        raise PreconditionError("time points must be strictly increasing")
    return kernel.values(t)


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

class LocalTimeSimulator:
    """Exact-event simulator of a finite chain's local time at the origin.

    Holding times are exponential with the state's exit rate and jumps follow
    the embedded chain, so no discretization error enters.  All randomness
    comes from the generator passed to ``sample``.
    """

    def __init__(self, generator):
        self.generator = generator
        rates = generator.rates
        n = generator.n_states
        self.exit_rates = generator.exit_rates
        cum = np.zeros((n, n))
        for s in range(n):
            row = np.clip(rates[s], 0.0, None).copy()
            row[s] = 0.0
            total = row.sum()
            if total > 0.0:
                cum[s] = np.cumsum(row) / total
        self.cum_jump = cum
        self.target = generator.origin

    def sample(self, start, horizons, rng):
        """Local time at the distinguished state at each horizon, one path.

        ``horizons`` must be sorted ascending; returns an array of the same
        length.
        """
        horizons = np.asarray(horizons, dtype=float)
        out = np.empty(horizons.size)
        idx = 0
        t = 0.0
        state = int(start)
        local = 0.0
        target = self.target
        exit_rates = self.exit_rates
        cum = self.cum_jump
        while idx < horizons.size:
            rate = exit_rates[state]
            dwell = math.inf if rate <= 0.0 else rng.exponential(1.0 / rate)
            t_next = t + dwell
            while idx < horizons.size and horizons[idx] <= t_next:
                out[idx] = local + (horizons[idx] - t if state == target else 0.0)
                idx += 1
            if idx >= horizons.size:
                break
            if state == target:
                local += dwell
            t = t_next
            state = int(np.searchsorted(cum[state], rng.random()))
        return out


def simulate_local_time(generator, start, horizon, seed):
    """Time spent in the distinguished state up to ``horizon`` on one path.

    Deterministic given the seed; horizon 0 returns 0.
    """
    if horizon < 0:
        raise PreconditionError("horizon must be nonnegative")
    rng = np.random.default_rng(seed)
    sim = LocalTimeSimulator(generator)
    return float(sim.sample(start, np.array([float(horizon)]), rng)[0])
