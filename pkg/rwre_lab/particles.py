# ABOUTME: Particle configurations, environment-dependent product initial laws and exact windowed dynamics.
# ABOUTME: Each step splits every occupied site binomially; variates are keyed on (seed, step, site, tag).

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binom, poisson

from rwre_lab.environment import (
    Environment,
    EnvironmentSpec,
    mean_rho,
    omega_grid,
    potential_rows,
)
from rwre_lab.errors import SpecError, WindowTooSmall
from rwre_lab.rng import Stream, extend_hash, hash_keys, seed_array, uniforms, unit_floats
from rwre_lab.window import Window

logger = logging.getLogger(__name__)

# Population tags of the dynamics stream; tag 0 is the plain (or matched) system
TAG_MATCHED = 0
TAG_PLUS = 1
TAG_MINUS = 2
# landing draws of observed site j use tag TAG_LANDING + j
TAG_LANDING = 16

F_TOLERANCE = 1e-10
BINOMIAL_SEARCH_MAX = 64


@dataclass(eq=False)
class Configuration:
    """Particle counts on a window of sites at some time

    Counts are held densely over the window; sites outside the window carry
    no particles.

    Attributes:
        window: Sites covered
        counts: Non-negative count per window site
        time: Number of steps the configuration has been evolved
        seed: Seed of the draw that produced it (metadata only)
    """
    window: Window
    counts: np.ndarray
    time: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.window.size,):
            raise ValueError(
                f"counts has shape {self.counts.shape}, window {self.window} needs ({self.window.size},)"
            )
        if np.any(self.counts < 0):
            raise ValueError("particle counts must be non-negative")

    @classmethod
    def from_sparse(
        cls,
        window: Window,
        counts: Dict[int, int],
        time: int = 0,
        seed: Optional[int] = None,
    ) -> "Configuration":
        dense = np.zeros(window.size, dtype=np.int64)
        for x, k in counts.items():
            if not window.contains_site(x):
                raise WindowTooSmall(f"site {x} lies outside {window}")
            dense[window.offset(x)] = k
        return cls(window, dense, time, seed)

    @classmethod
    def empty(cls, window: Window, time: int = 0) -> "Configuration":
        return cls(window, np.zeros(window.size, dtype=np.int64), time)

    def count_at(self, x: int) -> int:
        if not self.window.contains_site(x):
            return 0
        return int(self.counts[self.window.offset(x)])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def sparse(self) -> Dict[int, int]:
        """Occupied sites only, in increasing site order"""
        (idx,) = np.nonzero(self.counts)
        return {int(self.window.lo + i): int(self.counts[i]) for i in idx}

    def restrict(self, window: Window) -> "Configuration":
        """Counts on a sub-window

        Raises:
            WindowTooSmall: If window is not inside this configuration's window
        """
        self.window.require(window, "restriction")
        start = self.window.offset(window.lo)
        return Configuration(window, self.counts[start:start + window.size].copy(), self.time, self.seed)

    def copy(self) -> "Configuration":
        return Configuration(self.window, self.counts.copy(), self.time, self.seed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.window == other.window
            and self.time == other.time
            and np.array_equal(self.counts, other.counts)
        )

    def to_text(self) -> str:
        """Sparse text form: header lines, then one `site count` line per occupied site"""
        lines = [
            f"# window {self.window.lo} {self.window.hi}",
            f"# time {self.time}",
        ]
        if self.seed is not None:
            lines.append(f"# seed {self.seed}")
        lines.extend(f"{x} {k}" for x, k in self.sparse().items())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Configuration":
        header: Dict[str, List[str]] = {}
        counts: Dict[int, int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts:
                    header[parts[0]] = parts[1:]
                continue
            try:
                x, k = (int(v) for v in line.split())
            except ValueError:
                raise ValueError(f"line {lineno}: expected 'site count', got {raw!r}") from None
            counts[x] = k
        if "window" not in header:
            raise ValueError("configuration text has no '# window lo hi' header")
        lo, hi = (int(v) for v in header["window"])
        time = int(header.get("time", ["0"])[0])
        seed = int(header["seed"][0]) if "seed" in header else None
        return cls.from_sparse(Window(lo, hi), counts, time, seed)

    def write(self, path: Union[str, Path]):
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path: Union[str, Path]) -> "Configuration":
        return cls.from_text(Path(path).read_text())


# -- initial laws -------------------------------------------------------------


def _poisson_quantile(u: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """inf{n : P(Poisson(mean) <= n) >= u}, with mean 0 giving 0"""
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), np.shape(u))
    out = np.zeros(np.shape(u), dtype=np.int64)
    pos = mean > 0.0
    if np.any(pos):
        out[pos] = poisson.ppf(u[pos], mean[pos]).astype(np.int64)
    return out


@dataclass(frozen=True)
class DeterministicConstant:
    """k particles on every site"""
    k: int

    needs_potential = False

    def __post_init__(self):
        if self.k < 0:
            raise SpecError(f"particle count k must be >= 0, got {self.k}")

    def site_means(self, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        return np.full(np.shape(omega), float(self.k))

    def quantile(self, u: np.ndarray, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        return np.full(np.shape(u), self.k, dtype=np.int64)

    def averaged_mean(self, spec: EnvironmentSpec) -> float:
        return float(self.k)

    def to_dict(self) -> Dict:
        return {"kind": "constant", "k": self.k}


@dataclass(frozen=True)
class PoissonConstant:
    """Poisson(lam) particles on every site, independent of the environment"""
    lam: float

    needs_potential = False

    def __post_init__(self):
        if self.lam < 0.0:
            raise SpecError(f"Poisson mean must be >= 0, got {self.lam}")

    def site_means(self, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        return np.full(np.shape(omega), float(self.lam))

    def quantile(self, u: np.ndarray, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        return _poisson_quantile(u, self.lam)

    def averaged_mean(self, spec: EnvironmentSpec) -> float:
        return float(self.lam)

    def to_dict(self) -> Dict:
        return {"kind": "poisson", "lam": self.lam}


@dataclass(frozen=True)
class StationaryPoisson:
    """Poisson(alpha * f(theta^x omega)) particles at site x

    This product law is stationary for the quenched dynamics.
    """
    alpha: float
    tol: float = F_TOLERANCE

    needs_potential = True

    def __post_init__(self):
        if self.alpha < 0.0:
            raise SpecError(f"alpha must be >= 0, got {self.alpha}")
        if self.tol <= 0.0:
            raise SpecError(f"f tolerance must be positive, got {self.tol}")

    def site_means(self, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        if f is None:
            raise ValueError("StationaryPoisson needs f values")
        return self.alpha * np.asarray(f)

    def quantile(self, u: np.ndarray, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        return _poisson_quantile(u, self.site_means(omega, f))

    def averaged_mean(self, spec: EnvironmentSpec) -> float:
        # E_P f = 1 / v_P
        m = mean_rho(spec)
        return self.alpha * (1.0 + m) / (1.0 - m)

    def to_dict(self) -> Dict:
        return {"kind": "stationary", "alpha": self.alpha, "tol": self.tol}


@dataclass(frozen=True)
class QuantileProduct:
    """General product law nu(theta^x omega) depending on omega_x through a finite table

    Attributes:
        table: (omega value, pmf over 0, 1, 2, ...) rows
        support_cap: Largest count kept; the pmf is truncated there and renormalized
    """
    table: Tuple[Tuple[float, Tuple[float, ...]], ...]
    support_cap: int = 64

    needs_potential = False

    def __post_init__(self):
        if not self.table:
            raise SpecError("quantile table needs at least one row")
        if self.support_cap < 0:
            raise SpecError(f"support_cap must be >= 0, got {self.support_cap}")
        for value, pmf in self.table:
            if not pmf or min(pmf) < 0.0 or sum(pmf[:self.support_cap + 1]) <= 0.0:
                raise SpecError(f"invalid pmf for omega = {value}")

    def _arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        values = np.array([v for v, _ in self.table], dtype=np.float64)
        width = min(self.support_cap + 1, max(len(p) for _, p in self.table))
        pmfs = np.zeros((len(self.table), width))
        for i, (_, pmf) in enumerate(self.table):
            kept = np.asarray(pmf[:width], dtype=np.float64)
            pmfs[i, :len(kept)] = kept / kept.sum()
        return values, pmfs

    def _rows(self, omega: np.ndarray, values: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64)
        gap = np.abs(omega[..., None] - values)
        idx = gap.argmin(axis=-1)
        unmatched = gap.min(axis=-1) > 1e-9
        if np.any(unmatched):
            raise SpecError(f"no quantile table row for omega = {float(omega[unmatched].flat[0])}")
        return idx

    def site_means(self, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        values, pmfs = self._arrays()
        means = pmfs @ np.arange(pmfs.shape[1])
        return means[self._rows(omega, values)]

    def quantile(self, u: np.ndarray, omega: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
        values, pmfs = self._arrays()
        cdf = np.cumsum(pmfs, axis=1)
        cdf[:, -1] = 1.0
        rows = self._rows(np.broadcast_to(omega, np.shape(u)), values)
        return (cdf[rows] < np.asarray(u)[..., None]).sum(axis=-1).astype(np.int64)

    def averaged_mean(self, spec: EnvironmentSpec) -> float:
        if not spec.discrete:
            raise SpecError("quantile tables need a discrete environment law")
        return spec.expect(lambda w: self.site_means(np.asarray(w)))

    def to_dict(self) -> Dict:
        return {
            "kind": "quantile",
            "table": [{"omega": v, "pmf": list(p)} for v, p in self.table],
            "support_cap": self.support_cap,
        }


InitialLaw = Union[DeterministicConstant, PoissonConstant, StationaryPoisson, QuantileProduct]


def env_rows(spec: EnvironmentSpec, env_seeds, lo: int, hi: int) -> np.ndarray:
    """omega rows over [lo, hi]; a single row when every replica shares one environment"""
    seeds = seed_array(env_seeds).reshape(-1)
    if np.all(seeds == seeds[0]):
        return omega_grid(spec, seeds[:1], lo, hi)
    return omega_grid(spec, seeds, lo, hi)


def _potential_for(spec: EnvironmentSpec, env_seeds, window: Window, tol: float) -> np.ndarray:
    seeds = seed_array(env_seeds).reshape(-1)
    if np.all(seeds == seeds[0]):
        seeds = seeds[:1]
    f, _, _ = potential_rows(spec, seeds, window, tol)
    return f


def sample_initial_rows(
    spec: EnvironmentSpec,
    env_seeds,
    law: InitialLaw,
    window: Window,
    config_seeds,
) -> np.ndarray:
    """Initial counts for many replicas at once

    Site x of replica r is the law's quantile at the keyed uniform
    u(config_seeds[r], x), with one uniform per site.

    Args:
        spec: Environment law
        env_seeds: One environment seed per replica (or a single shared one)
        law: Initial law
        window: Sites to fill
        config_seeds: One configuration seed per replica

    Returns:
        int64 array of shape (replicas, window.size)

    Raises:
        AssumptionViolation: For StationaryPoisson when E_P[rho_0] >= 1
    """
    config_seeds = seed_array(config_seeds).reshape(-1, 1)
    omega = env_rows(spec, env_seeds, window.lo, window.hi)
    f = _potential_for(spec, env_seeds, window, law.tol) if law.needs_potential else None
    u = uniforms(Stream.CONFIG, config_seeds, window.sites()[None, :])
    omega_b = np.broadcast_to(omega, u.shape)
    f_b = None if f is None else np.broadcast_to(f, u.shape)
    return law.quantile(u, omega_b, f_b)


def sample_initial(
    env: Environment,
    law: InitialLaw,
    window: Window,
    config_seed: int,
) -> Configuration:
    """Draw eta_0 on window from the product law nu^omega

    Sites are independent given the environment and the result is a pure
    function of (env, law, window, config_seed).

    Raises:
        AssumptionViolation: For StationaryPoisson when E_P[rho_0] >= 1
    """
    counts = sample_initial_rows(env.spec, [env.seed], law, window, [config_seed])
    return Configuration(window, counts[0], 0, config_seed)


# -- dynamics -----------------------------------------------------------------


def _binomial_search(v: np.ndarray, n: np.ndarray, q: np.ndarray) -> np.ndarray:
    # sequential search along the pmf recurrence; q <= 1/2 so (1 - q)^n cannot underflow
    odds = q / (1.0 - q)
    pmf = (1.0 - q) ** n
    cdf = pmf.copy()
    k = np.zeros(len(v), dtype=np.int64)
    (active,) = np.nonzero(v > cdf)
    step = 0
    while len(active):
        step += 1
        term = pmf[active] * odds[active] * (n[active] - step + 1) / step
        pmf[active] = term
        cdf[active] += term
        k[active] = step
        active = active[(v[active] > cdf[active]) & (n[active] > step)]
    return k


def binomial_quantile(u, n, p) -> np.ndarray:
    """Binomial(n, p) variates by inversion of the uniforms u, elementwise

    Counts up to BINOMIAL_SEARCH_MAX are inverted by a vectorized sequential
    search costing about n p + 1 terms; larger counts use scipy's binom.ppf.
    p > 1/2 is reflected through n - Binomial(n, 1 - p).
    """
    u, n, p = np.broadcast_arrays(
        np.asarray(u, dtype=np.float64), np.asarray(n, dtype=np.int64), np.asarray(p, dtype=np.float64)
    )
    shape = u.shape
    u, n, p = u.ravel(), n.ravel(), p.ravel()
    flip = p > 0.5
    q = np.where(flip, 1.0 - p, p)
    v = np.where(flip, 1.0 - u, u)
    out = np.zeros(n.shape, dtype=np.int64)
    big = n > BINOMIAL_SEARCH_MAX
    if np.any(big):
        out[big] = binom.ppf(v[big], n[big], q[big]).astype(np.int64)
    (small,) = np.nonzero(~big & (n > 0) & (q > 0.0))
    if len(small):
        out[small] = _binomial_search(v[small], n[small], q[small])
    out = np.where(flip, n - out, out)
    return np.clip(out, 0, n).reshape(shape)


def split_right(
    counts: np.ndarray,
    omega: np.ndarray,
    lo: int,
    step: int,
    dyn_seeds: np.ndarray,
    tag: int = TAG_MATCHED,
) -> np.ndarray:
    """Number of particles stepping right at each site: Binomial(count, omega_x) by inversion

    The variate of site x in row r is keyed on (seed_r, step, x, tag); the
    (seed, step) part of the key is hashed once per row.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if not np.any(counts):
        return np.zeros_like(counts)
    seeds = seed_array(dyn_seeds).reshape(-1, 1)
    sites = lo + np.arange(counts.shape[-1], dtype=np.int64)
    prefix = hash_keys(Stream.DYNAMICS, seeds, step)
    u = unit_floats(extend_hash(prefix, sites[None, :], tag))
    return binomial_quantile(u, counts, np.broadcast_to(omega, counts.shape))


def gather_full(right: np.ndarray, left: np.ndarray) -> np.ndarray:
    """Arrivals on [lo - 1, hi + 1] from movers on [lo, hi]"""
    R, W = right.shape
    out = np.zeros((R, W + 2), dtype=np.int64)
    out[:, :W] += left
    out[:, 2:] += right
    return out


def gather_cone(right: np.ndarray, left: np.ndarray) -> np.ndarray:
    """Arrivals on [lo + 1, hi - 1], the part fully determined by movers on [lo, hi]"""
    return right[:, :-2] + left[:, 2:]


def evolve_rows(
    omega: np.ndarray,
    omega_lo: int,
    counts: np.ndarray,
    window: Window,
    time: int,
    T: int,
    dyn_seeds,
    full: bool = True,
    tag: int = TAG_MATCHED,
) -> Tuple[np.ndarray, Window]:
    """Advance many replicas T steps

    Args:
        omega: omega rows (1 or replicas) starting at site omega_lo; must cover
            window.pad(T) when full, window otherwise
        omega_lo: Site of omega column 0
        counts: Counts of shape (replicas, window.size)
        window: Sites of the counts
        time: Absolute step index of the first step
        T: Number of steps
        dyn_seeds: One dynamics seed per replica
        full: Grow the window by one site per side each step (exact, conserving);
            otherwise keep only the cone-exact part, shrinking one site per side

    Returns:
        (counts, window) after T steps
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if not full:
        window.shrink(T)
    counts = np.asarray(counts, dtype=np.int64)
    lo, hi = window.lo, window.hi
    for t in range(T):
        w = omega[:, lo - omega_lo:hi - omega_lo + 1]
        right = split_right(counts, w, lo, time + t, dyn_seeds, tag)
        left = counts - right
        if full:
            counts = gather_full(right, left)
            lo, hi = lo - 1, hi + 1
        else:
            counts = gather_cone(right, left)
            lo, hi = lo + 1, hi - 1
    return counts, Window(lo, hi)


def padded_window(observe: Window, T: int) -> Window:
    """Initial window whose evolution determines observe exactly after T steps"""
    return observe.pad(T)


def evolve(
    env: Environment,
    config: Configuration,
    T: int,
    dyn_seed: int,
    observe: Optional[Window] = None,
) -> Configuration:
    """Move every particle independently for T steps of the quenched walk

    Without observe, the window grows by T sites per side and the total count
    is conserved. With observe, the result is the exact state on observe,
    which must lie inside the input window shrunk by T.

    Raises:
        WindowTooSmall: If observe is not covered by the dependence cone
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if observe is not None:
        config.window.require(observe.pad(T), f"cone of {observe} over {T} steps")
        config = config.restrict(observe.pad(T))
    if T == 0:
        return config.copy()
    full = observe is None
    span = config.window.pad(T) if full else config.window
    omega = env.omegas(span.lo, span.hi)[None, :]
    counts, window = evolve_rows(
        omega, span.lo, config.counts[None, :], config.window,
        config.time, T, [dyn_seed], full=full,
    )
    logger.debug("evolved %s for %d steps to %s", config.window, T, window)
    return Configuration(window, counts[0], config.time + T, config.seed)


@dataclass
class MarginalSamples:
    """Counts on an observation window at several times, one row per replica

    Attributes:
        window: Observed sites
        times: Observation times
        counts: Array of shape (len(times), replicas, window.size)
        omegas: omega rows on the window (1 row when quenched)
        site_means: Initial law's per-site mean on the window (same rows as omegas)
    """
    window: Window
    times: List[int]
    counts: np.ndarray
    omegas: np.ndarray
    site_means: np.ndarray

    def at(self, t: int) -> np.ndarray:
        return self.counts[self.times.index(t)]


def sample_marginals(
    spec: EnvironmentSpec,
    env_seeds,
    law: InitialLaw,
    observe: Window,
    times: Sequence[int],
    config_seeds,
    dyn_seeds,
) -> MarginalSamples:
    """Sample eta_0 from law and record the counts on observe at each time

    The initial window is observe padded by the largest time; each segment of
    the run keeps just the part still needed for the later times.
    """
    times = sorted(set(int(t) for t in times))
    if not times or times[0] < 0:
        raise ValueError("times must be a non-empty list of non-negative steps")
    horizon = times[-1]
    start = observe.pad(horizon)
    counts = sample_initial_rows(spec, env_seeds, law, start, config_seeds)
    omega = env_rows(spec, env_seeds, start.lo, start.hi)
    f = _potential_for(spec, env_seeds, observe, law.tol) if law.needs_potential else None
    w_obs = omega[:, horizon:horizon + observe.size]
    means = law.site_means(w_obs, f)
    window, now = start, 0
    out = np.zeros((len(times), counts.shape[0], observe.size), dtype=np.int64)
    for i, t in enumerate(times):
        target = observe.pad(horizon - t)
        counts, window = _advance_to(omega, start.lo, counts, window, now, t - now, dyn_seeds, target)
        now = t
        out[i] = counts[:, horizon - t:horizon - t + observe.size]
    return MarginalSamples(observe, times, out, w_obs, means)


def landing_kernel(omega: np.ndarray, omega_lo: int, observe: Window, times: Sequence[int]) -> Dict[int, np.ndarray]:
    """P^omega_y(X_t = x) for x in observe and y in observe.pad(t), one matrix per time

    Runs the backward equation h_{t+1}(y) = omega_y h_t(y + 1) + (1 - omega_y) h_t(y - 1)
    from the indicators of the observed sites.

    Args:
        omega: One omega row starting at site omega_lo, covering observe.pad(max(times))
        omega_lo: Site of omega column 0
        observe: Target sites
        times: Non-negative step counts

    Returns:
        time -> array of shape (observe.size, observe.pad(time).size)
    """
    times = sorted(set(int(t) for t in times))
    top = times[-1]
    span = observe.pad(top)
    row = np.asarray(omega, dtype=np.float64).reshape(-1)
    first = span.lo - omega_lo
    if first < 0 or first + span.size > len(row):
        raise WindowTooSmall(f"omega row does not cover {span}")
    w = row[first:first + span.size]
    h = np.zeros((observe.size, span.size))
    h[np.arange(observe.size), top + np.arange(observe.size)] = 1.0
    kernels = {}
    for t in range(top + 1):
        if t in times:
            kernels[t] = h[:, top - t:top - t + observe.pad(t).size].copy()
        if t == top:
            break
        nxt = np.zeros_like(h)
        nxt[:, :-1] = w[:-1] * h[:, 1:]
        nxt[:, 1:] += (1.0 - w[1:]) * h[:, :-1]
        h = nxt
    return kernels


def landing_marginals(
    spec: EnvironmentSpec,
    env_seed: int,
    law: InitialLaw,
    observe: Window,
    times: Sequence[int],
    config_seeds,
    dyn_seeds,
) -> MarginalSamples:
    """sample_marginals for replicas sharing one environment, without moving particles

    Given omega the particles walk independently, so after t steps each of the
    eta_0(y) particles sits on observed site x with probability P^omega_y(X_t = x).
    A chain of conditional binomials routes them to the observed sites (or
    elsewhere), which reproduces the joint law of the counts on observe at each
    time. Draws for different times share eta_0 but not the paths.
    """
    times = sorted(set(int(t) for t in times))
    if not times or times[0] < 0:
        raise ValueError("times must be a non-empty list of non-negative steps")
    horizon = times[-1]
    start = observe.pad(horizon)
    counts = sample_initial_rows(spec, [env_seed], law, start, config_seeds)
    omega = env_rows(spec, [env_seed], start.lo, start.hi)
    f = _potential_for(spec, [env_seed], observe, law.tol) if law.needs_potential else None
    w_obs = omega[:, horizon:horizon + observe.size]
    means = law.site_means(w_obs, f)
    kernels = landing_kernel(omega[0], start.lo, observe, times)
    seeds = seed_array(dyn_seeds).reshape(-1, 1)
    out = np.zeros((len(times), counts.shape[0], observe.size), dtype=np.int64)
    for i, t in enumerate(times):
        K = kernels[t]
        (cols,) = np.nonzero(K.sum(axis=0) > 0.0)
        K = K[:, cols]
        offset = horizon - t
        remaining = counts[:, offset + cols]
        sites = start.lo + offset + cols
        prefix = hash_keys(Stream.DYNAMICS, seeds, t)
        unrouted = np.ones(len(cols))
        for j in range(observe.size):
            if not np.any(remaining):
                break
            p = np.clip(K[j] / np.maximum(unrouted, 1e-300), 0.0, 1.0)
            u = unit_floats(extend_hash(prefix, sites[None, :], TAG_LANDING + j))
            landed = binomial_quantile(u, remaining, np.broadcast_to(p, remaining.shape))
            out[i, :, j] = landed.sum(axis=1)
            remaining = remaining - landed
            unrouted = unrouted - K[j]
    return MarginalSamples(observe, times, out, w_obs, means)


def _advance_to(omega, omega_lo, counts, window, time, steps, dyn_seeds, target):
    counts, window = evolve_rows(omega, omega_lo, counts, window, time, steps, dyn_seeds, full=False)
    if window != target:
        raise WindowTooSmall(f"evolved window {window} differs from {target}")
    return counts, window


# -- profiles and test functions ---------------------------------------------


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function, zero outside its knots

    Attributes:
        knots: (x, y) points with strictly increasing x
    """
    knots: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if len(self.knots) < 2:
            raise SpecError("piecewise-linear function needs at least two knots")
        xs = [x for x, _ in self.knots]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise SpecError("knot positions must be strictly increasing")

    def __call__(self, y) -> np.ndarray:
        xs = np.array([x for x, _ in self.knots])
        ys = np.array([v for _, v in self.knots])
        return np.interp(np.asarray(y, dtype=np.float64), xs, ys, left=0.0, right=0.0)

    @property
    def support(self) -> Tuple[float, float]:
        return self.knots[0][0], self.knots[-1][0]

    @property
    def bound(self) -> float:
        return max(abs(v) for _, v in self.knots)

    def breakpoints(self) -> List[float]:
        return [x for x, _ in self.knots]

    def to_dict(self) -> Dict:
        return {"kind": "piecewise", "knots": [list(k) for k in self.knots]}


@dataclass(frozen=True)
class Indicator:
    """height on (a, b], zero elsewhere"""
    a: float
    b: float
    height: float = 1.0

    def __post_init__(self):
        if self.b <= self.a:
            raise SpecError(f"indicator needs a < b, got ({self.a}, {self.b}]")

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return np.where((y > self.a) & (y <= self.b), self.height, 0.0)

    @property
    def support(self) -> Tuple[float, float]:
        return self.a, self.b

    @property
    def bound(self) -> float:
        return abs(self.height)

    def breakpoints(self) -> List[float]:
        return [self.a, self.b]

    def to_dict(self) -> Dict:
        return {"kind": "indicator", "a": self.a, "b": self.b, "height": self.height}


ProfileSpec = Union[Indicator, PiecewiseLinear]
TestFunction = PiecewiseLinear


def triangle(a: float, b: float, peak: Optional[float] = None, height: float = 1.0) -> PiecewiseLinear:
    """Hat function on [a, b] rising to height at peak (default: midpoint)"""
    if peak is None:
        peak = 0.5 * (a + b)
    if not a < peak < b:
        raise SpecError(f"triangle peak {peak} must lie strictly inside ({a}, {b})")
    return PiecewiseLinear(((a, 0.0), (peak, height), (b, 0.0)))


def pairing_sites(N: int, a: float, b: float) -> Window:
    """Sites floor(N a) + 1 .. floor(N b) of the empirical pairing"""
    return Window(math.floor(N * a) + 1, math.floor(N * b))


def pairing_rows(
    counts: np.ndarray,
    window: Window,
    N: int,
    g: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
) -> np.ndarray:
    """(1/N) sum_x eta(x) g(x/N) over x in (Na, Nb] for each replica row"""
    sites = pairing_sites(N, a, b)
    window.require(sites, "pairing range")
    start = window.offset(sites.lo)
    weights = np.asarray(g(sites.sites() / N), dtype=np.float64)
    return counts[..., start:start + sites.size] @ weights / N


def empirical_pairing(
    config: Configuration,
    N: int,
    g: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
) -> float:
    """(1/N) sum_{x = floor(Na)+1}^{floor(Nb)} eta(x) g(x/N)

    Raises:
        WindowTooSmall: If the summation range is not inside config.window
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return float(pairing_rows(config.counts, config.window, N, g, a, b))


def profile_window(profile: ProfileSpec, N: int) -> Window:
    lo, hi = profile.support
    return pairing_sites(N, lo, hi)


def synthesize_rows(
    profile: ProfileSpec,
    N: int,
    window: Window,
    seeds,
    rounding: str = "poisson",
) -> np.ndarray:
    """Counts realizing the macroscopic profile, one row per seed"""
    if rounding not in ("poisson", "floor"):
        raise SpecError(f"unknown rounding mode: {rounding}")
    density = profile(window.sites() / N)
    if np.any(density < 0.0):
        raise SpecError("profile must be non-negative to synthesize particles")
    seeds = seed_array(seeds).reshape(-1, 1)
    if rounding == "floor":
        return np.repeat(np.floor(density).astype(np.int64)[None, :], len(seeds), axis=0)
    u = uniforms(Stream.PROFILE, seeds, window.sites()[None, :])
    return _poisson_quantile(u, density[None, :])


def synthesize_profile_config(
    profile: ProfileSpec,
    N: int,
    window: Optional[Window],
    seed: int,
    rounding: str = "poisson",
) -> Configuration:
    """Initial configuration whose empirical pairings converge to the profile

    counts(x) is Poisson(prof(x/N)) independently, or floor(prof(x/N)) when
    rounding is "floor". window defaults to the sites of the profile support.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if window is None:
        window = profile_window(profile, N)
    counts = synthesize_rows(profile, N, window, [seed], rounding)
    return Configuration(window, counts[0], 0, seed)
