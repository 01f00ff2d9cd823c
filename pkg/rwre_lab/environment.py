# ABOUTME: Law P of a site, reproducible lazily-evaluated environments, and the analytic invariants.
# ABOUTME: Covers mean rho, speed v_P, slowdown exponent s and the stationary potential f.

import logging
import math
from dataclasses import dataclass
from threading import Lock
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.stats
from scipy.integrate import quad
from scipy.optimize import bisect
from scipy.special import logsumexp

from rwre_lab.errors import AssumptionViolation, DepthExceeded, SpecError
from rwre_lab.rng import Stream, seed_array, uniforms
from rwre_lab.window import Window

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-10
S_BRACKET = (1.0 + 1e-6, 64.0)
S_RESIDUAL = 1e-10
S_HARD_MAX = 4096.0
F_DEPTH_CAP = 10 ** 6
CACHE_MAX_SITES = 1 << 22


@dataclass(frozen=True)
class TwoPoint:
    """omega_0 = values[0] with probability prob, values[1] otherwise"""
    values: Tuple[float, float]
    prob: float

    def atoms(self) -> Tuple[Tuple[float, float], ...]:
        return ((self.values[0], self.prob), (self.values[1], 1.0 - self.prob))


@dataclass(frozen=True)
class Discrete:
    """Finite law given as (value, probability) atoms"""
    points: Tuple[Tuple[float, float], ...]

    def atoms(self) -> Tuple[Tuple[float, float], ...]:
        return self.points


@dataclass(frozen=True)
class TruncatedContinuous:
    """A scipy.stats continuous law restricted to [c, 1 - c]

    Attributes:
        distribution: Name of a scipy.stats continuous distribution (e.g. "beta")
        params: Keyword parameters of the distribution, as sorted (name, value) pairs
    """
    distribution: str
    params: Tuple[Tuple[str, float], ...] = ()

    def frozen(self):
        dist = getattr(scipy.stats, self.distribution, None)
        if dist is None or not hasattr(dist, "pdf"):
            raise SpecError(f"unknown continuous distribution: {self.distribution}")
        return dist(**dict(self.params))


LawKind = Union[TwoPoint, Discrete, TruncatedContinuous]


@dataclass(frozen=True)
class EnvironmentSpec:
    """Law P of a single site omega_0 together with the ellipticity constant c

    Every support point lies in [c, 1 - c]. Specs with E_P[rho_0] >= 1 can be
    built but are flagged by `transient == False`.
    """
    kind: LawKind
    ellipticity_c: float

    def __post_init__(self):
        c = self.ellipticity_c
        if not 0.0 < c <= 0.5:
            raise SpecError(f"ellipticity constant c must lie in (0, 1/2], got {c}")
        if isinstance(self.kind, TruncatedContinuous):
            lo, hi = self._truncation_mass()
            if hi - lo <= 0.0:
                raise SpecError(
                    f"{self.kind.distribution} puts no mass on [{c}, {1 - c}]"
                )
            return
        atoms = self.kind.atoms()
        if not atoms:
            raise SpecError("discrete law needs at least one atom")
        for value, prob in atoms:
            if not c - 1e-12 <= value <= 1.0 - c + 1e-12:
                raise SpecError(f"support point {value} outside [{c}, {1 - c}]")
            if prob < 0.0:
                raise SpecError(f"negative probability {prob}")
        total = sum(prob for _, prob in atoms)
        if abs(total - 1.0) > 1e-9:
            raise SpecError(f"probabilities sum to {total}, not 1")

    # -- helpers -------------------------------------------------------------

    @property
    def discrete(self) -> bool:
        return not isinstance(self.kind, TruncatedContinuous)

    def _truncation_mass(self) -> Tuple[float, float]:
        dist = self.kind.frozen()
        c = self.ellipticity_c
        return float(dist.cdf(c)), float(dist.cdf(1.0 - c))

    def _atom_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        atoms = self.kind.atoms()
        values = np.array([v for v, _ in atoms], dtype=np.float64)
        probs = np.array([p for _, p in atoms], dtype=np.float64)
        return values, probs

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """E_P[fn(omega_0)]: exact sum for discrete laws, adaptive quadrature otherwise"""
        if self.discrete:
            values, probs = self._atom_arrays()
            return float(np.sum(probs * fn(values)))
        dist = self.kind.frozen()
        c = self.ellipticity_c
        f_lo, f_hi = self._truncation_mass()
        value, _ = quad(
            lambda w: float(fn(np.asarray(w))) * dist.pdf(w),
            c, 1.0 - c, epsabs=0.0, epsrel=QUAD_RTOL, limit=200,
        )
        return value / (f_hi - f_lo)

    def log_rho_moment(self, s: float) -> float:
        """log E_P[rho_0^s], evaluated stably for large s"""
        if self.discrete:
            values, probs = self._atom_arrays()
            log_rho = np.log((1.0 - values) / values)
            return float(logsumexp(s * log_rho, b=probs))
        moment = self.expect(lambda w: np.exp(s * np.log((1.0 - w) / w)))
        return math.log(moment)

    def prob_rho_above_one(self) -> float:
        """P(rho_0 > 1) = P(omega_0 < 1/2)"""
        if self.discrete:
            values, probs = self._atom_arrays()
            return float(np.sum(probs[values < 0.5]))
        c = self.ellipticity_c
        f_lo, f_hi = self._truncation_mass()
        dist = self.kind.frozen()
        upper = min(0.5, 1.0 - c)
        if upper <= c:
            return 0.0
        return (float(dist.cdf(upper)) - f_lo) / (f_hi - f_lo)

    @property
    def transient(self) -> bool:
        """Whether E_P[rho_0] < 1 (walks drift to +infinity)"""
        return mean_rho(self) < 1.0

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms to omega values by inverting the law's distribution function"""
        if isinstance(self.kind, TwoPoint):
            w1, w2 = self.kind.values
            return np.where(u < self.kind.prob, w1, w2)
        if self.discrete:
            values, probs = self._atom_arrays()
            cdf = np.cumsum(probs)
            cdf[-1] = 1.0
            return values[np.searchsorted(cdf, u, side="right").clip(max=len(values) - 1)]
        dist = self.kind.frozen()
        f_lo, f_hi = self._truncation_mass()
        c = self.ellipticity_c
        return np.clip(dist.ppf(f_lo + u * (f_hi - f_lo)), c, 1.0 - c)

    def to_dict(self) -> Dict:
        out: Dict = {"c": self.ellipticity_c}
        if isinstance(self.kind, TwoPoint):
            out.update(law="two_point", values=list(self.kind.values), prob=self.kind.prob)
        elif isinstance(self.kind, Discrete):
            out.update(law="discrete", atoms=[list(a) for a in self.kind.atoms()])
        else:
            out.update(
                law="truncated",
                distribution=self.kind.distribution,
                params=dict(self.kind.params),
            )
        return out


def two_point(w1: float, w2: float, q: float, c: Optional[float] = None) -> EnvironmentSpec:
    """TwoPoint spec; c defaults to the tightest constant the support allows"""
    if c is None:
        c = min(w1, w2, 1.0 - w1, 1.0 - w2)
    return EnvironmentSpec(TwoPoint((w1, w2), q), c)


def discrete(atoms: Sequence[Tuple[float, float]], c: Optional[float] = None) -> EnvironmentSpec:
    """Discrete spec; c defaults to the tightest constant the support allows"""
    atoms = tuple((float(w), float(p)) for w, p in atoms)
    if c is None:
        c = min(min(w, 1.0 - w) for w, _ in atoms)
    return EnvironmentSpec(Discrete(atoms), c)


def omega_grid(spec: EnvironmentSpec, seeds, lo: int, hi: int) -> np.ndarray:
    """omega_x for x in [lo, hi], one row per environment seed

    Args:
        spec: Site law
        seeds: Sequence of environment seeds
        lo: First site
        hi: Last site (inclusive)

    Returns:
        Array of shape (len(seeds), hi - lo + 1)
    """
    seeds = seed_array(seeds).reshape(-1, 1)
    sites = np.arange(lo, hi + 1, dtype=np.int64).reshape(1, -1)
    return spec.sample(uniforms(Stream.ENVIRONMENT, seeds, sites))


class Environment:
    """A reproducible environment omega = (omega_x) drawn i.i.d. from a spec

    Values are computed on demand from (spec, seed, x); one contiguous block of at most
    CACHE_MAX_SITES values is cached, and requests far from it are computed
    without caching. Cache fills are idempotent, so concurrent readers always
    see the same numbers.

    Example:
        >>> env = Environment(two_point(0.4, 0.8, 0.3), seed=7)
        >>> env.omega_at(0) == env.omega_at(0)
        True
    """

    def __init__(self, spec: EnvironmentSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._lock = Lock()
        self._cache_lo = 0
        self._cache = np.empty(0, dtype=np.float64)
        if not spec.transient:
            logger.warning(
                "environment law has E[rho] = %.6g >= 1; walks are not transient to the right",
                mean_rho(spec),
            )

    def omega_at(self, x: int) -> float:
        """Right-step probability at site x (pure function of spec, seed and x)"""
        return float(self.omegas(x, x)[0])

    def omegas(self, lo: int, hi: int) -> np.ndarray:
        """omega_x for x in [lo, hi] (inclusive), served from the cache when possible"""
        with self._lock:
            cache_hi = self._cache_lo + len(self._cache) - 1
            if len(self._cache) and self._cache_lo <= lo and hi <= cache_hi:
                start = lo - self._cache_lo
                return self._cache[start:start + hi - lo + 1].copy()
            new_lo, new_hi = lo, hi
            if len(self._cache):
                new_lo, new_hi = min(lo, self._cache_lo), max(hi, cache_hi)
            if new_hi - new_lo + 1 > CACHE_MAX_SITES:
                # far from the cached block: keep the request only if it fits on its own
                new_lo, new_hi = lo, hi
            values = omega_grid(self.spec, [self.seed], new_lo, new_hi)[0]
            if new_hi - new_lo + 1 <= CACHE_MAX_SITES:
                self._cache, self._cache_lo = values, new_lo
            start = lo - new_lo
            return values[start:start + hi - lo + 1].copy()

    def window(self, window: Window) -> np.ndarray:
        return self.omegas(window.lo, window.hi)

    def rhos(self, lo: int, hi: int) -> np.ndarray:
        w = self.omegas(lo, hi)
        return (1.0 - w) / w

    def __repr__(self) -> str:
        return f"Environment(spec={self.spec!r}, seed={self.seed})"


def omega_at(env: Environment, x: int) -> float:
    """Right-step probability of env at site x"""
    return env.omega_at(x)


def mean_rho(spec: EnvironmentSpec) -> float:
    """E_P[rho_0] with rho_0 = (1 - omega_0) / omega_0"""
    return spec.expect(lambda w: (1.0 - w) / w)


@dataclass(frozen=True)
class ModelInvariants:
    """Analytic invariants of an environment law

    Attributes:
        mean_rho: E_P[rho_0]
        speed: v_P = (1 - mean_rho) / (1 + mean_rho)
        s_exponent: Root s > 1 of E_P[rho_0^s] = 1, None when no root exists
        nestling: Whether P(omega_0 < 1/2) > 0
        s_residual: |E_P[rho_0^s] - 1| at the returned root
    """
    mean_rho: float
    speed: float
    s_exponent: Optional[float]
    nestling: bool
    s_residual: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "mean_rho": self.mean_rho,
            "speed": self.speed,
            "s_exponent": self.s_exponent,
            "nestling": self.nestling,
            "s_residual": self.s_residual,
        }


def _require_transient(spec: EnvironmentSpec) -> float:
    m = mean_rho(spec)
    if m >= 1.0:
        raise AssumptionViolation(f"E_P[rho_0] = {m:.10g} >= 1; no positive speed")
    return m


def solve_s_exponent(spec: EnvironmentSpec, s_max: float = S_BRACKET[1]) -> Optional[Tuple[float, float]]:
    """Root s > 1 of E_P[rho_0^s] = 1 by bracketing and bisection

    The map s -> log E_P[rho_0^s] is convex, negative just above 1 (since
    E_P[rho_0] < 1) and eventually positive when P(rho_0 > 1) > 0. The upper
    bracket doubles from s_max until the sign changes.

    Returns:
        (s, residual) or None when P(rho_0 > 1) = 0
    """
    if spec.prob_rho_above_one() <= 0.0:
        return None
    lo = S_BRACKET[0]
    hi = s_max
    g = spec.log_rho_moment
    while g(hi) < 0.0:
        hi *= 2.0
        if hi > S_HARD_MAX:
            logger.warning("no root of E[rho^s] = 1 below s = %g", S_HARD_MAX)
            return None
    s = bisect(g, lo, hi, xtol=1e-14, maxiter=500)
    residual = abs(math.expm1(g(s)))
    if residual > S_RESIDUAL:
        logger.warning("s-exponent residual %.3g exceeds %.1g", residual, S_RESIDUAL)
    return s, residual


def compute_invariants(spec: EnvironmentSpec) -> ModelInvariants:
    """Speed, slowdown exponent and nestling flag of a transient law

    Raises:
        AssumptionViolation: If E_P[rho_0] >= 1
    """
    m = _require_transient(spec)
    root = solve_s_exponent(spec)
    return ModelInvariants(
        mean_rho=m,
        speed=(1.0 - m) / (1.0 + m),
        s_exponent=None if root is None else root[0],
        nestling=spec.prob_rho_above_one() > 0.0,
        s_residual=None if root is None else root[1],
    )


@dataclass
class PotentialWindow:
    """Values of f(theta^x omega) over a window of sites

    Attributes:
        window: Sites covered
        values: f at each site of the window
        omegas: omega at each site of the window (for the three-term identity)
        tolerance: Bound on the expected truncation error of each value
        depth: Series depth used at the left edge (an upper bound on every K(x))
    """
    window: Window
    values: np.ndarray
    omegas: np.ndarray
    tolerance: float
    depth: int = 0

    def value_at(self, x: int) -> float:
        return float(self.values[self.window.offset(x)])

    def identity_residuals(self) -> np.ndarray:
        """f_x - omega_{x-1} f_{x-1} - (1 - omega_{x+1}) f_{x+1} at interior sites"""
        f, w = self.values, self.omegas
        return f[1:-1] - w[:-2] * f[:-2] - (1.0 - w[2:]) * f[2:]

    def mean(self) -> float:
        return float(np.mean(self.values))


def potential_rows(
    spec: EnvironmentSpec,
    seeds,
    window: Window,
    tol: float,
    max_depth: int = F_DEPTH_CAP,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """f(theta^x omega) over window for several environments at once

    For each site the series (1/omega_x)(1 + sum_i prod_{j<=i} rho_{x+j}) is
    summed at least to the depth K(x) where the running product times
    mean_rho / (1 - mean_rho) / c drops below tol. All sites share one right
    edge R, so the sums obey S_x = 1 + rho_{x+1} S_{x+1} exactly.

    Returns:
        (f values, omegas, depth) with arrays of shape (len(seeds), window.size)

    Raises:
        AssumptionViolation: If E_P[rho_0] >= 1
        DepthExceeded: If some K(x) exceeds max_depth
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    m = _require_transient(spec)
    log_thresh = math.log(tol * spec.ellipticity_c * (1.0 - m) / m)
    ext = 64
    while True:
        if ext > max_depth:
            raise DepthExceeded(
                f"f truncation needs more than {max_depth} terms on {window}"
            )
        w = omega_grid(spec, seeds, window.lo, window.hi + ext)
        log_rho = np.log((1.0 - w) / w)
        # L[:, k] = sum of log rho over sites lo+1 .. lo+k
        L = np.zeros_like(log_rho)
        L[:, 1:] = np.cumsum(log_rho[:, 1:], axis=1)
        suffix_min = np.minimum.accumulate(L[:, ::-1], axis=1)[:, ::-1]
        n = window.size
        if np.all(suffix_min[:, 1:n + 1] < L[:, :n] + log_thresh):
            break
        ext *= 2
    rho = np.exp(log_rho)
    S = np.ones_like(w)
    for k in range(w.shape[1] - 2, -1, -1):
        S[:, k] = 1.0 + rho[:, k + 1] * S[:, k + 1]
    f = S / w
    logger.debug("f on %s: %d rows, series depth %d", window, f.shape[0], ext)
    return f[:, :window.size], w[:, :window.size], ext + window.size - 1


def compute_f(
    env: Environment,
    window: Window,
    tol: float,
    max_depth: int = F_DEPTH_CAP,
) -> PotentialWindow:
    """f(theta^x omega) for every x in window

    Raises:
        AssumptionViolation: If E_P[rho_0] >= 1
        DepthExceeded: If the truncation depth passes max_depth
    """
    values, omegas, depth = potential_rows(env.spec, [env.seed], window, tol, max_depth)
    return PotentialWindow(window, values[0], omegas[0], tol, depth)
