# ABOUTME: Statistical estimators over simulated walks and particle systems.
# ABOUTME: Speeds, LLN deviations, slowdown and hitting tails, Poisson fit, TV distance, transport error.

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.stats import chisquare, linregress, norm, poisson

from rwre_lab.environment import (
    Environment,
    EnvironmentSpec,
    compute_invariants,
    omega_grid,
    potential_rows,
)
from rwre_lab.errors import DegenerateEstimate, InsufficientSamples, SpecError
from rwre_lab.particles import (
    InitialLaw,
    MarginalSamples,
    ProfileSpec,
    StationaryPoisson,
    env_rows,
    evolve_rows,
    landing_marginals,
    pairing_rows,
    pairing_sites,
    sample_marginals,
    synthesize_rows,
)
from rwre_lab.rng import SeedMode, SeedPolicy, Stream, derive_seeds
from rwre_lab.walker import simulate_hitting, simulate_walks
from rwre_lab.window import Window

logger = logging.getLogger(__name__)

__all__ = [
    "SeedPolicy",
    "ProbabilityEstimate",
    "wilson_interval",
    "speed_estimate",
    "uniform_lln_deviation",
    "slowdown_probability",
    "slowdown_scaling",
    "hitting_tail",
    "poisson_gof",
    "tv_distance_to_poisson",
    "hydro_transport_error",
    "stationarity_check",
    "convergence_tv",
    "mean_preservation",
]

CONFIDENCE = 0.95
MIN_GOF_SAMPLES = 1000
MIN_EXPECTED = 5.0
POISSON_MASS_FLOOR = 1e-9
HYDRO_QUAD_EPSABS = 1e-8
# Cells (replicas x sites) of per-replica omega held at once in averaged mode
CHUNK_CELLS = 1 << 22


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion"""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class ProbabilityEstimate:
    """Fraction of successes with a Wilson interval

    With zero successes the interval is one-sided, [0, 3 / trials], and the
    estimate is marked degenerate.
    """
    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "p_hat": self.p_hat,
            "ci": [self.ci_low, self.ci_high],
            "degenerate": self.degenerate,
        }


def estimate_probability(
    successes: int,
    trials: int,
    strict: bool = False,
    what: str = "event",
) -> ProbabilityEstimate:
    """ProbabilityEstimate from counts

    Raises:
        DegenerateEstimate: With strict=True and zero successes
    """
    successes, trials = int(successes), int(trials)
    if successes == 0:
        est = ProbabilityEstimate(0, trials, 0.0, 0.0, min(1.0, 3.0 / trials), degenerate=True)
        message = f"no {what} in {trials} trials; upper bound 3/{trials}"
        if strict:
            raise DegenerateEstimate(message, est)
        logger.warning(message)
        return est
    lo, hi = wilson_interval(successes, trials)
    return ProbabilityEstimate(successes, trials, successes / trials, lo, hi)


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def _replica_chunks(replicas: int, cells_per_replica: int) -> Iterator[np.ndarray]:
    size = max(1, CHUNK_CELLS // max(1, cells_per_replica))
    for start in range(0, replicas, size):
        yield np.arange(start, min(replicas, start + size), dtype=np.int64)


Mapper = Callable[[Callable, Sequence], List]


def _inline_map(fn: Callable, items: Sequence) -> List:
    return [fn(item) for item in items]


def _marginal_chunk(job: Tuple) -> MarginalSamples:
    # top-level so process pools can pickle it
    spec, env_seeds, law, observe, times, config_seeds, dyn_seeds, quenched = job
    if quenched:
        return landing_marginals(spec, int(env_seeds[0]), law, observe, times, config_seeds, dyn_seeds)
    return sample_marginals(spec, env_seeds, law, observe, times, config_seeds, dyn_seeds)


def _marginals(
    spec: EnvironmentSpec,
    policy: SeedPolicy,
    law: InitialLaw,
    observe: Window,
    times: Sequence[int],
    mapper: Optional[Mapper] = None,
) -> MarginalSamples:
    """Counts on observe at each time for every replica, gathered over replica chunks

    Quenched policies route particles with landing_marginals; averaged ones
    evolve every replica in its own environment. Chunks go through mapper in
    order, so results do not depend on how they are spread over workers.
    """
    width = observe.pad(max(times)).size
    env_seeds, config_seeds, dyn_seeds = policy.env_seeds(), policy.config_seeds(), policy.dyn_seeds()
    jobs = [
        (spec, env_seeds[r], law, observe, times, config_seeds[r], dyn_seeds[r], policy.quenched)
        for r in _replica_chunks(policy.replicas, width if policy.quenched else 2 * width)
    ]
    parts = (mapper or _inline_map)(_marginal_chunk, jobs)
    first = parts[0]
    if policy.quenched:
        omegas, means = first.omegas, first.site_means
    else:
        omegas = np.concatenate([p.omegas for p in parts])
        means = np.concatenate([p.site_means for p in parts])
    counts = np.concatenate([p.counts for p in parts], axis=1)
    return MarginalSamples(observe, first.times, counts, omegas, means)


def _family(starts: Sequence[int], copies: int) -> Tuple[np.ndarray, np.ndarray]:
    starts = np.asarray(starts, dtype=np.int64)
    if copies < 1:
        raise ValueError(f"particles_per_site must be >= 1, got {copies}")
    return np.repeat(starts, copies), np.tile(np.arange(copies, dtype=np.int64), len(starts))


def family_displacements(
    spec: EnvironmentSpec,
    policy: SeedPolicy,
    starts: Sequence[int],
    n: int,
    particles_per_site: int = 1,
) -> np.ndarray:
    """X_n - y for every walk of every replica's family, shape (replicas, family size)

    Replica r's walk i from y uses the seed derived from (master, r, y, i).
    Quenched policies share one environment; averaged ones draw one per replica.
    """
    ys, copy_ids = _family(starts, particles_per_site)
    F = len(ys)
    lo, hi = int(ys.min()) - n, int(ys.max()) + n
    env_seeds = policy.env_seeds()
    shared = omega_grid(spec, env_seeds[:1], lo, hi)[0] if policy.quenched else None
    out = np.empty((policy.replicas, F), dtype=np.int64)
    width = 1 if policy.quenched else hi - lo + 1
    for r in _replica_chunks(policy.replicas, F * width):
        rr = np.repeat(r, F)
        y = np.tile(ys, len(r))
        seeds = derive_seeds(policy.master_seed, Stream.WALK, rr, y, np.tile(copy_ids, len(r)))
        if shared is not None:
            batch = simulate_walks(shared, lo, y, n, seeds)
        else:
            omega = omega_grid(spec, env_seeds[r], lo, hi)
            batch = simulate_walks(omega, lo, y, n, seeds, rows=rr - r[0])
        out[r] = batch.displacement.reshape(len(r), F)
    return out


@dataclass
class SpeedEstimate:
    """Empirical X_n / n against the analytic speed"""
    n: int
    replicas: int
    mean: float
    stderr: float
    speed: float

    @property
    def z_score(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == self.speed else math.inf
        return abs(self.mean - self.speed) / self.stderr

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "replicas": self.replicas,
            "mean": self.mean,
            "stderr": self.stderr,
            "speed": self.speed,
            "z_score": self.z_score,
        }


def speed_estimate(spec: EnvironmentSpec, n: int, policy: SeedPolicy, start: int = 0) -> SpeedEstimate:
    """Mean of X_n / n over single-walk replicas"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    inv = compute_invariants(spec)
    disp = family_displacements(spec, policy, [start], n)[:, 0]
    mean, se = _mean_se(disp / n)
    return SpeedEstimate(n, policy.replicas, mean, se, inv.speed)


@dataclass
class LLNDeviation:
    """Largest |(X_n - y) / n - v_P| over the family y in (An, Bn], i <= m"""
    n: int
    A: float
    B: float
    particles_per_site: int
    walks: int
    max_deviation: float
    speed: float

    @property
    def implied_gamma(self) -> Optional[float]:
        if self.n < 2:
            return None
        return math.log(self.particles_per_site) / math.log(self.n)

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "A": self.A,
            "B": self.B,
            "particles_per_site": self.particles_per_site,
            "walks": self.walks,
            "max_deviation": self.max_deviation,
            "speed": self.speed,
            "implied_gamma": self.implied_gamma,
        }


def uniform_lln_deviation(
    env: Environment,
    A: float,
    B: float,
    n: int,
    particles_per_site: int = 1,
    seed: int = 0,
) -> LLNDeviation:
    """Uniform law of large numbers check in a fixed environment

    Walks start from every site y with An < y <= Bn, m of them per site;
    walk (y, i) uses the seed derived from (seed, y, i), so shrinking the
    family can only lower the maximum.
    """
    if not A < B:
        raise ValueError(f"need A < B, got A={A}, B={B}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    speed = compute_invariants(env.spec).speed
    sites = pairing_sites(n, A, B)
    ys, copy_ids = _family(sites.sites(), particles_per_site)
    seeds = derive_seeds(seed, Stream.WALK, ys, copy_ids)
    lo, hi = sites.lo - n, sites.hi + n
    batch = simulate_walks(env.omegas(lo, hi), lo, ys, n, seeds)
    dev = np.abs(batch.displacement / n - speed)
    logger.debug("uniform LLN: %d walks of %d steps, max deviation %.4g", len(ys), n, dev.max())
    return LLNDeviation(n, A, B, particles_per_site, len(ys), float(dev.max()), speed)


@dataclass
class SlowdownEstimate:
    """P(X_n - y <= n v for some walk of the family) under a seed policy"""
    n: int
    v: float
    mode: SeedMode
    estimate: ProbabilityEstimate

    def to_dict(self) -> Dict:
        return {"n": self.n, "v": self.v, "mode": self.mode.value, **self.estimate.to_dict()}


def slowdown_probability(
    spec: EnvironmentSpec,
    v: float,
    n: int,
    policy: SeedPolicy,
    starts: Sequence[int] = (0,),
    particles_per_site: int = 1,
    strict: bool = False,
) -> SlowdownEstimate:
    """Fraction of replicas whose walk (or any walk of the family) is slowed down

    Args:
        spec: Environment law
        v: Speed threshold, normally 0 < v < v_P
        n: Number of steps
        policy: Quenched or averaged replica seeds
        starts: Starting sites of the family (default: just the origin)
        particles_per_site: Walks per starting site
        strict: Raise DegenerateEstimate at zero successes

    Raises:
        DegenerateEstimate: With strict=True when no replica slowed down
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    speed = compute_invariants(spec).speed
    if not 0.0 < v < speed:
        logger.warning("slowdown threshold v = %g outside (0, %g)", v, speed)
    if policy.replicas < 1000:
        logger.warning("slowdown estimate with only %d replicas", policy.replicas)
    disp = family_displacements(spec, policy, starts, n, particles_per_site)
    hits = np.any(disp <= n * v, axis=1)
    est = estimate_probability(int(hits.sum()), policy.replicas, strict, f"slowdown at n={n}")
    return SlowdownEstimate(n, v, policy.mode, est)


@dataclass
class ScalingDiagnostic:
    """Decay of slowdown probabilities in n

    Quenched mode regresses -log p(n) on n^(1 - 1/s), so a straight line
    (high r_value) supports the stretched-exponential scale; free_fit
    instead fits kappa in -log p ~ C n^kappa. Averaged mode fits the slope
    kappa' of log p against log n, to be compared with 1 - s. The exponent
    correction delta is taken as 0.

    Attributes:
        mode: SeedMode of the estimates
        ns: All n values
        estimates: SlowdownEstimate per n
        fit_ns: The n values whose interval excludes 0 and 1 (used in the fit)
        fitted_exponent: kappa (quenched, free fit), kappa' (averaged) or None
        reference_exponent: 1 - 1/s (quenched) or 1 - s (averaged), None without s
        slope: Fitted slope (the constant C for the quenched linearity fit)
        intercept: Fitted intercept
        r_value: Correlation coefficient of the fit
    """
    mode: SeedMode
    ns: List[int]
    estimates: List[SlowdownEstimate]
    fit_ns: List[int]
    fitted_exponent: Optional[float]
    reference_exponent: Optional[float]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    r_value: Optional[float] = None
    free_fit: bool = False
    delta: float = 0.0

    def strictly_decreasing(self) -> bool:
        """Whether consecutive 95% intervals are disjoint and ordered downward"""
        return all(
            b.estimate.ci_high < a.estimate.ci_low
            for a, b in zip(self.estimates, self.estimates[1:])
        )

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode.value,
            "ns": self.ns,
            "estimates": [e.to_dict() for e in self.estimates],
            "fit_ns": self.fit_ns,
            "fitted_exponent": self.fitted_exponent,
            "reference_exponent": self.reference_exponent,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_value": self.r_value,
            "free_fit": self.free_fit,
            "delta": self.delta,
        }


def slowdown_scaling(
    spec: EnvironmentSpec,
    v: float,
    ns: Sequence[int],
    policy: SeedPolicy,
    free_fit: bool = False,
) -> ScalingDiagnostic:
    """Slowdown probabilities over several n and their fitted decay"""
    inv = compute_invariants(spec)
    s = inv.s_exponent
    ns = sorted(int(n) for n in ns)
    estimates = [slowdown_probability(spec, v, n, policy) for n in ns]
    usable = [
        (n, e.estimate.p_hat) for n, e in zip(ns, estimates)
        if 0 < e.estimate.successes < e.estimate.trials
    ]
    fit_ns = [n for n, _ in usable]
    if policy.quenched:
        reference = 1.0 - 1.0 / s if s is not None else 1.0
    else:
        reference = 1.0 - s if s is not None else None
    diag = ScalingDiagnostic(policy.mode, ns, estimates, fit_ns, None, reference, free_fit=free_fit)
    if len(usable) < 2:
        logger.warning("only %d usable slowdown estimates; no fit", len(usable))
        return diag
    n_arr = np.array([n for n, _ in usable], dtype=np.float64)
    p_arr = np.array([p for _, p in usable])
    if not policy.quenched:
        fit = linregress(np.log(n_arr), np.log(p_arr))
        diag.fitted_exponent = float(fit.slope)
    elif free_fit:
        fit = linregress(np.log(n_arr), np.log(-np.log(p_arr)))
        diag.fitted_exponent = float(fit.slope)
    else:
        fit = linregress(n_arr ** reference, -np.log(p_arr))
        diag.fitted_exponent = reference
    diag.slope, diag.intercept, diag.r_value = float(fit.slope), float(fit.intercept), float(fit.rvalue)
    return diag


@dataclass
class HittingTail:
    """P(some walk of the family needs at least n mu steps to advance n)"""
    n: int
    mu: float
    starts: List[int]
    cap: int
    estimate: ProbabilityEstimate

    def to_dict(self) -> Dict:
        return {"n": self.n, "mu": self.mu, "starts": self.starts, "cap": self.cap, **self.estimate.to_dict()}


def hitting_tail(
    env: Environment,
    starts: Sequence[int],
    n: int,
    mu: float,
    replicas: int,
    seed: int,
    cap: Optional[int] = None,
) -> HittingTail:
    """Fraction of replicas where some T_n^y is at least n mu

    Walks are censored at cap steps (default: just below n mu); a censored
    walk counts as exceeding. Replica r's walk from y uses the seed derived
    from (seed, r, y), so enlarging the family can only raise the fraction.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    speed = compute_invariants(env.spec).speed
    if mu * speed <= 1.0:
        logger.warning("mu = %g is not above 1/v_P = %g", mu, 1.0 / speed)
    budget = math.ceil(n * mu) - 1
    run_cap = budget if cap is None else min(cap, budget)
    starts = [int(y) for y in starts]
    ys = np.tile(np.asarray(starts, dtype=np.int64), replicas)
    rr = np.repeat(np.arange(replicas, dtype=np.int64), len(starts))
    if run_cap < n:
        exceed = np.ones(replicas, dtype=bool)
    else:
        seeds = derive_seeds(seed, Stream.WALK, rr, ys)
        lo, hi = min(starts) - run_cap, max(starts) + n
        times = simulate_hitting(env.omegas(lo, hi), lo, ys, n, run_cap, seeds)
        exceed = (times < 0).reshape(replicas, len(starts)).any(axis=1)
    est = estimate_probability(int(exceed.sum()), replicas, what=f"hitting delay at n={n}")
    return HittingTail(n, mu, starts, run_cap, est)


@dataclass
class GofResult:
    """Chi-square goodness of fit against Poisson(lam)"""
    statistic: float
    p_value: float
    dof: int
    bins: List[Tuple[int, Optional[int]]]
    samples: int

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level

    def to_dict(self) -> Dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "dof": self.dof,
            "bins": [list(b) for b in self.bins],
            "samples": self.samples,
        }


def _merge_bins(expected: np.ndarray, observed: np.ndarray, floor: float):
    """Merge adjacent cells left to right until every merged cell expects >= floor"""
    bins, exp_out, obs_out = [], [], []
    start, e_acc, o_acc = 0, 0.0, 0
    for k in range(len(expected)):
        e_acc += expected[k]
        o_acc += observed[k]
        if e_acc >= floor:
            bins.append([start, k])
            exp_out.append(e_acc)
            obs_out.append(o_acc)
            start, e_acc, o_acc = k + 1, 0.0, 0
    if e_acc > 0.0 or o_acc > 0:
        if exp_out:
            bins[-1][1] = len(expected) - 1
            exp_out[-1] += e_acc
            obs_out[-1] += o_acc
        else:
            bins.append([0, len(expected) - 1])
            exp_out.append(e_acc)
            obs_out.append(o_acc)
    return bins, np.array(exp_out), np.array(obs_out, dtype=np.float64)


def poisson_gof(
    samples: Sequence[int],
    lam: float,
    min_samples: int = MIN_GOF_SAMPLES,
) -> GofResult:
    """Chi-square test of counts against Poisson(lam)

    Cells are 0, 1, ... with the last cell collecting the upper tail; cells
    are merged until each expects at least 5 counts.

    Raises:
        InsufficientSamples: With fewer than min_samples counts
    """
    samples = np.asarray(samples, dtype=np.int64)
    if len(samples) < min_samples:
        raise InsufficientSamples(f"{len(samples)} samples; at least {min_samples} needed")
    if lam <= 0.0:
        raise SpecError(f"Poisson mean must be positive, got {lam}")
    N = len(samples)
    top = int(max(samples.max(), poisson.isf(POISSON_MASS_FLOOR, lam))) + 1
    k = np.arange(top)
    expected = N * poisson.pmf(k, lam)
    expected[-1] = N * poisson.sf(top - 2, lam)
    observed = np.bincount(np.clip(samples, 0, top - 1), minlength=top)
    bins, exp_m, obs_m = _merge_bins(expected, observed, MIN_EXPECTED)
    exp_m *= N / exp_m.sum()
    labels = [(int(a), None if b == top - 1 else int(b)) for a, b in bins]
    if len(exp_m) < 2:
        return GofResult(0.0, 1.0, 0, labels, N)
    stat, p = chisquare(obs_m, exp_m)
    return GofResult(float(stat), float(p), len(exp_m) - 1, labels, N)


def tv_distance_to_poisson(
    samples: Optional[Sequence[int]],
    lam: float,
    pmf: Optional[Sequence[float]] = None,
    min_samples: int = MIN_GOF_SAMPLES,
) -> float:
    """Total variation between an empirical (or given) pmf and Poisson(lam)

    The comparison runs over 0..K with K the larger of the last sampled
    value and the point where Poisson mass drops below 1e-9; remaining
    Poisson mass is added as is.

    Raises:
        InsufficientSamples: With fewer than min_samples counts
    """
    if lam < 0.0:
        raise SpecError(f"Poisson mean must be non-negative, got {lam}")
    if pmf is None:
        samples = np.asarray(samples, dtype=np.int64)
        if len(samples) < min_samples:
            raise InsufficientSamples(f"{len(samples)} samples; at least {min_samples} needed")
        emp = np.bincount(samples) / len(samples)
    else:
        emp = np.asarray(pmf, dtype=np.float64)
    cut = int(poisson.isf(POISSON_MASS_FLOOR, lam)) + 1 if lam > 0.0 else 1
    top = max(len(emp), cut)
    emp = np.pad(emp, (0, top - len(emp)))
    q = poisson.pmf(np.arange(top), lam)
    tail = float(poisson.sf(top - 1, lam))
    return float(min(1.0, 0.5 * (np.abs(emp - q).sum() + tail)))


@dataclass
class HydroResult:
    """Transport error of one test function"""
    name: str
    target: float
    errors: np.ndarray
    pairings: np.ndarray

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean())

    @property
    def stderr(self) -> float:
        return _mean_se(self.errors)[1]

    def to_dict(self) -> Dict:
        z = norm.ppf(0.5 + CONFIDENCE / 2.0)
        return {
            "name": self.name,
            "target": self.target,
            "mean_error": self.mean_error,
            "ci": [self.mean_error - z * self.stderr, self.mean_error + z * self.stderr],
            "mean_pairing": float(self.pairings.mean()),
            "replicas": len(self.errors),
        }


@dataclass
class HydroReport:
    N: int
    t: float
    steps: int
    speed: float
    results: List[HydroResult] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "N": self.N,
            "t": self.t,
            "steps": self.steps,
            "speed": self.speed,
            "results": [r.to_dict() for r in self.results],
        }


def transport_target(
    profile: ProfileSpec,
    g: Callable[[np.ndarray], np.ndarray],
    support: Tuple[float, float],
    shift: float,
    breakpoints: Sequence[float] = (),
) -> float:
    """Integral of prof(y - shift) g(y) over the support of g"""
    a, b = support
    points = sorted({p for p in list(breakpoints) + [x + shift for x in profile.breakpoints()] if a < p < b})
    value, _ = quad(
        lambda y: float(profile(y - shift) * g(y)),
        a, b, points=points or None, epsabs=HYDRO_QUAD_EPSABS, limit=400,
    )
    return value


def hydro_transport_error(
    spec: EnvironmentSpec,
    profile: ProfileSpec,
    N: int,
    t: float,
    test_functions: Sequence,
    policy: SeedPolicy,
    rounding: str = "poisson",
    names: Optional[Sequence[str]] = None,
) -> HydroReport:
    """Empirical pairing after floor(N t) steps against the transported profile

    Args:
        spec: Environment law
        profile: Macroscopic initial density
        N: Scale
        t: Macroscopic time
        test_functions: Piecewise-linear test functions (see particles.triangle)
        policy: Replica seeds
        rounding: "poisson" or "floor" profile synthesis
        names: Labels of the test functions (default g0, g1, ...)

    Raises:
        WindowTooSmall: If a test function has an empty pairing range
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not test_functions:
        raise ValueError("at least one test function is needed")
    steps = math.floor(N * t)
    speed = compute_invariants(spec).speed
    ranges = [pairing_sites(N, *g.support) for g in test_functions]
    observe = Window(min(r.lo for r in ranges), max(r.hi for r in ranges))
    start = observe.pad(steps)
    env_seeds = policy.env_seeds()
    config_seeds = policy.config_seeds()
    dyn_seeds = policy.dyn_seeds()
    pairings = np.zeros((len(test_functions), policy.replicas))
    width = 1 if policy.quenched else start.size
    for r in _replica_chunks(policy.replicas, width + start.size):
        counts = synthesize_rows(profile, N, start, config_seeds[r], rounding)
        omega = env_rows(spec, env_seeds[r], start.lo, start.hi)
        counts, window = evolve_rows(
            omega, start.lo, counts, start, 0, steps, dyn_seeds[r], full=False
        )
        for i, g in enumerate(test_functions):
            a, b = g.support
            pairings[i, r] = pairing_rows(counts, window, N, g, a, b)
    report = HydroReport(N, t, steps, speed)
    for i, g in enumerate(test_functions):
        target = transport_target(profile, g, g.support, speed * steps / N, g.breakpoints())
        name = names[i] if names else f"g{i}"
        report.results.append(HydroResult(name, target, np.abs(pairings[i] - target), pairings[i]))
    logger.debug("hydro N=%d t=%g: %d steps on %s", N, t, steps, observe)
    return report


@dataclass
class StationarityReport:
    """Marginals of a stationary Poisson start after evolution

    Attributes:
        probes: Probe sites
        times: Observation times
        expected: alpha f at each probe site
        means: Empirical mean per (time, probe)
        z_scores: |mean - expected| / SE per (time, probe)
        dispersions: Sample variance over mean per (time, probe); 1 for Poisson marginals
        rejection_rate: Fraction of (time, probe, batch) GOF tests rejected at level
        level: GOF level
        tests: Number of GOF tests
    """
    probes: List[int]
    times: List[int]
    expected: np.ndarray
    means: np.ndarray
    z_scores: np.ndarray
    dispersions: np.ndarray
    rejection_rate: float
    level: float
    tests: int

    def to_dict(self) -> Dict:
        return {
            "probes": self.probes,
            "times": self.times,
            "expected": self.expected.tolist(),
            "means": self.means.tolist(),
            "max_z": float(self.z_scores.max()),
            "max_dispersion_gap": float(np.abs(self.dispersions - 1.0).max()),
            "rejection_rate": self.rejection_rate,
            "level": self.level,
            "tests": self.tests,
        }


def stationarity_check(
    spec: EnvironmentSpec,
    alpha: float,
    probes: Window,
    times: Sequence[int],
    policy: SeedPolicy,
    batches: int = 1,
    level: float = 0.05,
    tol: float = 1e-10,
    mapper: Optional[Mapper] = None,
) -> StationarityReport:
    """Check that Poisson(alpha f) marginals persist in a fixed environment

    Replicas are split into batches; one GOF test is run per probe site,
    batch and observation time, and the rejection rate pools all of them.

    Raises:
        InsufficientSamples: If a batch holds fewer than 1000 replicas
    """
    if not policy.quenched:
        raise ValueError("stationarity is a quenched statement; use a quenched seed policy")
    law = StationaryPoisson(alpha, tol)
    marg = _marginals(spec, policy, law, probes, times, mapper)
    expected = marg.site_means[0]
    means = marg.counts.mean(axis=1)
    se = np.sqrt(np.maximum(expected, 1e-300) / policy.replicas)
    z = np.abs(means - expected[None, :]) / se[None, :]
    dispersions = marg.counts.var(axis=1, ddof=1) / np.maximum(means, 1e-300)
    per_batch = policy.replicas // batches
    rejections = tests = 0
    for counts in marg.counts:
        for j in range(probes.size):
            for b in range(batches):
                chunk = counts[b * per_batch:(b + 1) * per_batch, j]
                tests += 1
                rejections += poisson_gof(chunk, expected[j]).rejects(level)
    return StationarityReport(
        [int(x) for x in probes.sites()], marg.times, expected, means, z, dispersions,
        rejections / tests, level, tests,
    )


@dataclass
class ConvergenceReport:
    site: int
    alpha: float
    target_mean: float
    ns: List[int]
    tv: List[float]

    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.tv, self.tv[1:]))

    def to_dict(self) -> Dict:
        return {
            "site": self.site,
            "alpha": self.alpha,
            "target_mean": self.target_mean,
            "ns": self.ns,
            "tv": self.tv,
        }


def convergence_tv(
    spec: EnvironmentSpec,
    law: InitialLaw,
    ns: Sequence[int],
    policy: SeedPolicy,
    site: int = 0,
    alpha: Optional[float] = None,
    tol: float = 1e-10,
    mapper: Optional[Mapper] = None,
) -> ConvergenceReport:
    """TV distance of eta_n(site) to Poisson(alpha f(theta^site omega)) for each n

    alpha defaults to v_P times the averaged density of law, the limit density.
    """
    if not policy.quenched:
        raise ValueError("convergence to a fixed Poisson law needs a quenched seed policy")
    inv = compute_invariants(spec)
    if alpha is None:
        alpha = inv.speed * law.averaged_mean(spec)
    observe = Window(site, site)
    f, _, _ = potential_rows(spec, [policy.fixed_env_seed()], observe, tol)
    target = float(alpha * f[0, 0])
    marg = _marginals(spec, policy, law, observe, ns, mapper)
    tv = [tv_distance_to_poisson(marg.at(n)[:, 0], target) for n in marg.times]
    return ConvergenceReport(site, float(alpha), target, marg.times, tv)


@dataclass
class MeanPreservation:
    ns: List[int]
    means: List[float]
    stderrs: List[float]
    initial_mean: float
    initial_stderr: float

    def z_scores(self) -> List[float]:
        out = []
        for m, se in zip(self.means, self.stderrs):
            band = math.hypot(se, self.initial_stderr)
            out.append(abs(m - self.initial_mean) / band if band > 0 else 0.0)
        return out

    def to_dict(self) -> Dict:
        return {
            "ns": self.ns,
            "means": self.means,
            "stderrs": self.stderrs,
            "initial_mean": self.initial_mean,
            "initial_stderr": self.initial_stderr,
            "z_scores": self.z_scores(),
        }


def mean_preservation(
    spec: EnvironmentSpec,
    law: InitialLaw,
    ns: Sequence[int],
    policy: SeedPolicy,
    site: int = 0,
    mapper: Optional[Mapper] = None,
) -> MeanPreservation:
    """Replica average of eta_n(site) against that of eta_0(site)"""
    times = sorted(set([0] + [int(n) for n in ns]))
    marg = _marginals(spec, policy, law, Window(site, site), times, mapper)
    m0, se0 = _mean_se(marg.at(0)[:, 0])
    stats = [_mean_se(marg.at(n)[:, 0]) for n in times if n != 0]
    return MeanPreservation(
        [n for n in times if n != 0],
        [m for m, _ in stats],
        [se for _, se in stats],
        m0,
        se0,
    )
