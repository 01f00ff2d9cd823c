# ABOUTME: Coupling of two particle systems in one environment: matched pairs plus +/- discrepancies.
# ABOUTME: Also measures discrepancy decay and runs the two-walk meeting experiment.

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from rwre_lab.environment import Environment, EnvironmentSpec
from rwre_lab.errors import ParityError, WindowMismatch
from rwre_lab.particles import (
    TAG_MATCHED,
    TAG_MINUS,
    TAG_PLUS,
    Configuration,
    InitialLaw,
    env_rows,
    gather_cone,
    gather_full,
    sample_initial_rows,
    split_right,
)
from rwre_lab.rng import SeedPolicy, Stream, derive_seeds, uniforms
from rwre_lab.window import Window

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class CoupledConfiguration:
    """Two configurations eta, zeta stored as matched and unmatched parts

    eta = xi + beta_plus and zeta = xi + beta_minus, with beta_plus and
    beta_minus never both positive at a site.
    """
    window: Window
    xi: np.ndarray
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    time: int = 0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=np.int64)
        self.beta_plus = np.asarray(self.beta_plus, dtype=np.int64)
        self.beta_minus = np.asarray(self.beta_minus, dtype=np.int64)
        ok, errors = self.validate()
        if not ok:
            raise ValueError("; ".join(errors))

    def validate(self) -> Tuple[bool, List[str]]:
        """Check shapes, signs and complementarity

        Returns:
            Tuple of (is_valid, list of error messages)
        """
        errors = []
        for name in ("xi", "beta_plus", "beta_minus"):
            arr = getattr(self, name)
            if arr.shape != (self.window.size,):
                errors.append(f"{name} has shape {arr.shape}, expected ({self.window.size},)")
            elif np.any(arr < 0):
                errors.append(f"{name} has negative counts")
        if not errors and np.any((self.beta_plus > 0) & (self.beta_minus > 0)):
            errors.append("beta_plus and beta_minus are both positive at some site")
        return len(errors) == 0, errors

    @property
    def eta(self) -> Configuration:
        return Configuration(self.window, self.xi + self.beta_plus, self.time)

    @property
    def zeta(self) -> Configuration:
        return Configuration(self.window, self.xi + self.beta_minus, self.time)

    @property
    def total(self) -> int:
        return int(self.xi.sum() + self.beta_plus.sum() + self.beta_minus.sum())


def rematch(
    xi_arrivals: np.ndarray,
    plus_arrivals: np.ndarray,
    minus_arrivals: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair up + and - arrivals at each site

    Returns:
        (xi, beta_plus, beta_minus) where xi gains min(arr+, arr-) and the
        discrepancies keep (arr+ - arr-)^+ and (arr+ - arr-)^-
    """
    matched = np.minimum(plus_arrivals, minus_arrivals)
    return xi_arrivals + matched, plus_arrivals - matched, minus_arrivals - matched


def couple_initial(eta0: Configuration, zeta0: Configuration) -> CoupledConfiguration:
    """Maximal matching xi = min(eta, zeta)

    Raises:
        WindowMismatch: If the two configurations cover different windows
    """
    if eta0.window != zeta0.window:
        raise WindowMismatch(f"eta window {eta0.window} differs from zeta window {zeta0.window}")
    if eta0.time != zeta0.time:
        raise WindowMismatch(f"eta time {eta0.time} differs from zeta time {zeta0.time}")
    diff = eta0.counts - zeta0.counts
    return CoupledConfiguration(
        eta0.window,
        np.minimum(eta0.counts, zeta0.counts),
        np.maximum(diff, 0),
        np.maximum(-diff, 0),
        eta0.time,
    )


def coupled_rows(
    omega: np.ndarray,
    omega_lo: int,
    xi: np.ndarray,
    beta_plus: np.ndarray,
    beta_minus: np.ndarray,
    window: Window,
    step: int,
    dyn_seeds,
    full: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Window]:
    """One coupled step for many replicas (arrays of shape (replicas, window.size))"""
    lo, hi = window.lo, window.hi
    w = omega[:, lo - omega_lo:hi - omega_lo + 1]
    new_window = Window(lo - 1, hi + 1) if full else window.shrink(1)
    gather = gather_full if full else gather_cone
    arrivals = []
    for counts, tag in ((xi, TAG_MATCHED), (beta_plus, TAG_PLUS), (beta_minus, TAG_MINUS)):
        right = split_right(counts, w, lo, step, dyn_seeds, tag)
        arrivals.append(gather(right, counts - right))
    return (*rematch(*arrivals), new_window)


def coupled_step(
    env: Environment,
    cc: CoupledConfiguration,
    dyn_seed: int,
    observe: Optional[Window] = None,
) -> CoupledConfiguration:
    """Advance the coupled system one step

    Matched particles share the plain system's variates, so with no
    discrepancies this is exactly evolve on xi. Without observe the window
    grows by one site per side; with observe the result is exact on observe.

    Raises:
        WindowTooSmall: If observe is not inside the window shrunk by one site
    """
    return coupled_evolve(env, cc, 1, dyn_seed, observe)


def coupled_evolve(
    env: Environment,
    cc: CoupledConfiguration,
    T: int,
    dyn_seed: int,
    observe: Optional[Window] = None,
) -> CoupledConfiguration:
    """T coupled steps (see coupled_step)"""
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    window = cc.window
    arrays = [cc.xi[None, :], cc.beta_plus[None, :], cc.beta_minus[None, :]]
    if observe is not None:
        window.require(observe.pad(T), f"cone of {observe} over {T} steps")
        start = window.offset(observe.lo - T)
        size = observe.size + 2 * T
        arrays = [a[:, start:start + size] for a in arrays]
        window = observe.pad(T)
    full = observe is None
    span = window.pad(T) if full else window
    omega = env.omegas(span.lo, span.hi)[None, :]
    for t in range(T):
        *arrays, window = coupled_rows(
            omega, span.lo, *arrays, window, cc.time + t, [dyn_seed], full=full
        )
    return CoupledConfiguration(window, arrays[0][0], arrays[1][0], arrays[2][0], cc.time + T)


@dataclass
class DiscrepancySeries:
    """Replica-averaged discrepancy densities on an observation window, per step

    Attributes:
        steps: 0..T
        plus_density: Mean beta_plus density at each step
        minus_density: Mean beta_minus density at each step
        plus_stderr: Standard error of plus_density
        minus_stderr: Standard error of minus_density
        diff_stderr: Standard error of plus_density - minus_density
        window: Observation window
        replicas: Number of replicas
    """
    steps: np.ndarray
    plus_density: np.ndarray
    minus_density: np.ndarray
    plus_stderr: np.ndarray
    minus_stderr: np.ndarray
    diff_stderr: np.ndarray
    window: Window
    replicas: int

    def monotone_violations(self, k: float = 2.0, which: str = "minus") -> List[int]:
        """Steps n where density(n + 1) exceeds density(n) by more than k standard errors"""
        d = self.minus_density if which == "minus" else self.plus_density
        se = self.minus_stderr if which == "minus" else self.plus_stderr
        band = k * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
        return [int(n) for n in self.steps[:-1][d[1:] - d[:-1] > band]]

    def difference_drift(self) -> float:
        """Largest |(plus - minus)(n) - (plus - minus)(0)| in units of its standard error"""
        diff = self.plus_density - self.minus_density
        se = np.sqrt(self.diff_stderr ** 2 + self.diff_stderr[0] ** 2)
        drift = np.abs(diff - diff[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, drift / se, np.where(drift > 0, np.inf, 0.0))
        return float(z.max())

    def to_rows(self) -> List[Dict]:
        return [
            {
                "step": int(n),
                "beta_plus_density": float(p),
                "beta_minus_density": float(m),
                "beta_plus_stderr": float(sp),
                "beta_minus_stderr": float(sm),
            }
            for n, p, m, sp, sm in zip(
                self.steps, self.plus_density, self.minus_density,
                self.plus_stderr, self.minus_stderr,
            )
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf,
            fieldnames=["step", "beta_plus_density", "beta_minus_density",
                        "beta_plus_stderr", "beta_minus_stderr"],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(self.to_rows())
        return buf.getvalue()


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    n = len(values)
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), se


def discrepancy_decay(
    spec: EnvironmentSpec,
    law_eta: InitialLaw,
    law_zeta: InitialLaw,
    window: Window,
    T: int,
    policy: SeedPolicy,
    shared_config_seeds: bool = False,
) -> DiscrepancySeries:
    """Mean beta_plus and beta_minus densities on window for steps 0..T

    eta_0 and zeta_0 are drawn on window padded by T; each step keeps the
    cone-exact part, so every density is that of the infinite system.

    Args:
        spec: Environment law
        law_eta: Initial law of eta (should have the larger mean)
        law_zeta: Initial law of zeta
        window: Observation window
        T: Horizon
        policy: Replica seeds (quenched: shared environment)
        shared_config_seeds: Draw both systems from the same configuration seeds
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    mean_eta, mean_zeta = law_eta.averaged_mean(spec), law_zeta.averaged_mean(spec)
    if mean_eta < mean_zeta:
        logger.warning(
            "eta mean %.6g is below zeta mean %.6g; beta_minus need not vanish",
            mean_eta, mean_zeta,
        )
    start = window.pad(T)
    env_seeds = policy.env_seeds()
    eta_seeds = policy.config_seeds(0)
    zeta_seeds = eta_seeds if shared_config_seeds else policy.config_seeds(1)
    dyn_seeds = policy.dyn_seeds()
    eta = sample_initial_rows(spec, env_seeds, law_eta, start, eta_seeds)
    zeta = sample_initial_rows(spec, env_seeds, law_zeta, start, zeta_seeds)
    diff = eta - zeta
    xi, bp, bm = np.minimum(eta, zeta), np.maximum(diff, 0), np.maximum(-diff, 0)
    omega = env_rows(spec, env_seeds, start.lo, start.hi)

    stats = np.zeros((T + 1, 5))
    current = start
    for t in range(T + 1):
        off = current.offset(window.lo)
        p = bp[:, off:off + window.size].mean(axis=1)
        m = bm[:, off:off + window.size].mean(axis=1)
        stats[t, 0:2] = _mean_se(p)
        stats[t, 2:4] = _mean_se(m)
        stats[t, 4] = _mean_se(p - m)[1]
        if t < T:
            xi, bp, bm, current = coupled_rows(
                omega, start.lo, xi, bp, bm, current, t, dyn_seeds, full=False
            )
    logger.debug("discrepancy decay on %s: %d steps, %d replicas", window, T, policy.replicas)
    return DiscrepancySeries(
        steps=np.arange(T + 1),
        plus_density=stats[:, 0],
        minus_density=stats[:, 2],
        plus_stderr=stats[:, 1],
        minus_stderr=stats[:, 3],
        diff_stderr=stats[:, 4],
        window=window,
        replicas=policy.replicas,
    )


@dataclass
class MeetingOutcome:
    """Whether two walks from start_pair occupied one site within horizon steps"""
    start_pair: Tuple[int, int]
    met: bool
    meeting_time: Optional[int]
    horizon: int


@dataclass
class MeetingReport:
    """Meeting times of independent walk pairs in a shared environment

    Attributes:
        y: Start of the first walk
        z: Start of the second walk
        horizon: Steps simulated
        times: Meeting time per replica, -1 when the pair never met
        flip_times: First time the lower walk's record reached the upper walk's
            record, -1 if never (only with the cross-check)
    """
    y: int
    z: int
    horizon: int
    times: np.ndarray
    flip_times: Optional[np.ndarray] = None
    outcomes: List[MeetingOutcome] = field(default_factory=list)

    @property
    def replicas(self) -> int:
        return len(self.times)

    @property
    def fraction_met(self) -> float:
        return self.fraction_by(self.horizon)

    def fraction_by(self, h: int) -> float:
        """Fraction of pairs that met within h steps (non-decreasing in h)"""
        return float(np.mean((self.times >= 0) & (self.times <= h)))

    def histogram(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meeting-time counts in dyadic bins [0, 1), [1, 2), [2, 4), ..."""
        top = max(1, int(np.ceil(np.log2(max(self.horizon, 1)))) + 1)
        edges = np.concatenate(([0], 2 ** np.arange(top)))
        edges[-1] = max(edges[-1], self.horizon + 1)
        counts, _ = np.histogram(self.times[self.times >= 0], bins=edges)
        return edges, counts

    def crosscheck_consistent(self) -> Optional[bool]:
        """Every record flip happens no earlier than a meeting"""
        if self.flip_times is None:
            return None
        flipped = self.flip_times >= 0
        return bool(np.all((self.times[flipped] >= 0) & (self.times[flipped] <= self.flip_times[flipped])))


def meeting_experiment(
    env: Environment,
    y: int,
    z: int,
    horizon: int,
    replicas: int,
    seed: int,
    crosscheck: bool = False,
) -> MeetingReport:
    """Run pairs of independent walks from y and z in env until they meet

    Args:
        env: Shared environment
        y: Start of the first walk
        z: Start of the second walk (z - y must be even)
        horizon: Largest number of steps
        replicas: Number of walk pairs
        seed: Master seed of the walk variates
        crosscheck: Also record when the lower walk's running maximum first
            reaches the upper walk's (a flip implies an earlier meeting)

    Raises:
        ParityError: If z - y is odd
    """
    if (z - y) % 2:
        raise ParityError(f"walks from {y} and {z} have odd separation and never meet")
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    lower, upper = min(y, z), max(y, z)
    r = np.arange(replicas, dtype=np.int64)
    seeds_a = derive_seeds(seed, Stream.WALK, r, 0)
    seeds_b = derive_seeds(seed, Stream.WALK, r, 1)
    times = np.full(replicas, -1, dtype=np.int64)
    flips = np.full(replicas, -1, dtype=np.int64) if crosscheck else None
    if y == z:
        times[:] = 0
        if crosscheck:
            flips[:] = 0
    else:
        lo = lower - horizon
        omega = env.omegas(lo, upper + horizon)
        a = np.full(replicas, lower, dtype=np.int64)
        b = np.full(replicas, upper, dtype=np.int64)
        max_a, max_b = a.copy(), b.copy()
        active = np.arange(replicas)
        for t in range(horizon):
            if len(active) == 0:
                break
            ua = uniforms(Stream.WALK, seeds_a[active], t)
            ub = uniforms(Stream.WALK, seeds_b[active], t)
            pa = a[active] + np.where(ua < omega[a[active] - lo], 1, -1)
            pb = b[active] + np.where(ub < omega[b[active] - lo], 1, -1)
            a[active], b[active] = pa, pb
            if crosscheck:
                max_a[active] = np.maximum(max_a[active], pa)
                max_b[active] = np.maximum(max_b[active], pb)
                new_flip = (flips[active] < 0) & (max_a[active] >= max_b[active])
                flips[active[new_flip]] = t + 1
            met = (pa == pb) & (times[active] < 0)
            times[active[met]] = t + 1
            done = times[active] >= 0
            if crosscheck:
                done &= flips[active] >= 0
            active = active[~done]
    outcomes = [
        MeetingOutcome((y, z), bool(t >= 0), int(t) if t >= 0 else None, horizon)
        for t in times
    ]
    report = MeetingReport(y, z, horizon, times, flips, outcomes)
    logger.debug("meeting %d..%d: %.4f met by %d", y, z, report.fraction_met, horizon)
    return report
