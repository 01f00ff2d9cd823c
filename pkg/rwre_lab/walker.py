# ABOUTME: Quenched nearest-neighbor random walks, hitting times and backtracking in a fixed environment.
# ABOUTME: Step t of the walk with seed k uses the keyed variate u(k, t), independent of position.

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from rwre_lab.environment import Environment, omega_grid
from rwre_lab.rng import SeedMode, Stream, derive_seeds, seed_array, uniforms

logger = logging.getLogger(__name__)


@dataclass
class WalkResult:
    """Summary of one walk of n steps

    Attributes:
        start: Starting site
        steps: Number of steps n
        final_position: Position after n steps
        min_position: Lowest site visited
        max_backtrack: Largest fall below a running rightward record
        path: Full trajectory (n + 1 positions), only when requested
    """
    start: int
    steps: int
    final_position: int
    min_position: int
    max_backtrack: int
    path: Optional[np.ndarray] = None

    @property
    def displacement(self) -> int:
        return self.final_position - self.start


@dataclass
class HittingResult:
    """First time the walk from start reaches start + distance

    Attributes:
        start: Starting site y
        distance: Target distance x >= 1
        time: Hitting time T, or None when censored
        cap: Step cap the walk ran under
    """
    start: int
    distance: int
    time: Optional[int]
    cap: int

    @property
    def hit(self) -> bool:
        return self.time is not None

    @property
    def censored(self) -> bool:
        return self.time is None


@dataclass
class WalkBatch:
    """Vectorized summaries of many walks (one entry per walk)"""
    starts: np.ndarray
    steps: int
    final: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    drawdown: np.ndarray
    paths: Optional[np.ndarray] = None

    @property
    def displacement(self) -> np.ndarray:
        return self.final - self.starts

    def result(self, i: int) -> WalkResult:
        return WalkResult(
            start=int(self.starts[i]),
            steps=self.steps,
            final_position=int(self.final[i]),
            min_position=int(self.minimum[i]),
            max_backtrack=int(self.drawdown[i]),
            path=None if self.paths is None else self.paths[i].copy(),
        )


def simulate_walks(
    omega: np.ndarray,
    lo: int,
    starts: np.ndarray,
    n: int,
    walk_seeds: np.ndarray,
    rows: Optional[np.ndarray] = None,
    keep_paths: bool = False,
) -> WalkBatch:
    """Run walks in one or several tabulated environments

    Args:
        omega: omega table, 1-D over sites lo.. or 2-D (environment rows x sites)
        lo: Site of column 0 of the table
        starts: Starting site of each walk
        n: Number of steps
        walk_seeds: Variate stream seed of each walk
        rows: Environment row of each walk (2-D tables only)
        keep_paths: Store full trajectories

    Returns:
        WalkBatch with one entry per walk
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    starts = np.asarray(starts, dtype=np.int64)
    seeds = seed_array(walk_seeds).reshape(-1)
    pos = starts.copy()
    lowest = pos.copy()
    highest = pos.copy()
    drawdown = np.zeros_like(pos)
    paths = np.empty((len(pos), n + 1), dtype=np.int64) if keep_paths else None
    if keep_paths:
        paths[:, 0] = pos
    for t in range(n):
        u = uniforms(Stream.WALK, seeds, t)
        if rows is None:
            w = omega[pos - lo]
        else:
            w = omega[rows, pos - lo]
        pos += np.where(u < w, 1, -1)
        np.minimum(lowest, pos, out=lowest)
        np.maximum(highest, pos, out=highest)
        np.maximum(drawdown, highest - pos, out=drawdown)
        if keep_paths:
            paths[:, t + 1] = pos
    return WalkBatch(starts, n, pos, lowest, highest, drawdown, paths)


def run_walks(
    env: Environment,
    starts: Sequence[int],
    n: int,
    walk_seeds: Sequence[int],
    keep_paths: bool = False,
) -> WalkBatch:
    """Independent quenched walks in env, one per (start, seed) pair"""
    starts = np.asarray(starts, dtype=np.int64)
    lo, hi = int(starts.min()) - n, int(starts.max()) + n
    omega = env.omegas(lo, hi)
    return simulate_walks(omega, lo, starts, n, seed_array(walk_seeds), keep_paths=keep_paths)


def run_walk(
    env: Environment,
    start: int,
    n: int,
    walk_seed: int,
    keep_path: bool = False,
) -> WalkResult:
    """One quenched walk of n steps from start

    Each step goes right with probability omega at the current site, using
    the variate keyed on (walk_seed, step).
    """
    return run_walks(env, [start], n, [walk_seed], keep_paths=keep_path).result(0)


def simulate_hitting(
    omega: np.ndarray,
    lo: int,
    starts: np.ndarray,
    distance: int,
    cap: int,
    walk_seeds: np.ndarray,
    rows: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Hitting times of start + distance for many walks; -1 marks censored walks"""
    if distance < 1:
        raise ValueError(f"distance must be >= 1, got {distance}")
    if cap < distance:
        raise ValueError(f"cap ({cap}) must be >= distance ({distance})")
    starts = np.asarray(starts, dtype=np.int64)
    seeds = seed_array(walk_seeds).reshape(-1)
    pos = starts.copy()
    target = starts + distance
    times = np.full(len(pos), -1, dtype=np.int64)
    active = np.arange(len(pos))
    for t in range(cap):
        if len(active) == 0:
            break
        u = uniforms(Stream.WALK, seeds[active], t)
        p = pos[active]
        w = omega[p - lo] if rows is None else omega[rows[active], p - lo]
        p = p + np.where(u < w, 1, -1)
        pos[active] = p
        done = p == target[active]
        times[active[done]] = t + 1
        active = active[~done]
    return times


def hitting_time(
    env: Environment,
    start: int,
    distance: int,
    cap: int,
    walk_seed: int,
) -> HittingResult:
    """First time the walk from start reaches start + distance, censored at cap steps"""
    times = hitting_times(env, [start], distance, cap, [walk_seed])
    t = int(times[0])
    return HittingResult(start, distance, None if t < 0 else t, cap)


def hitting_times(
    env: Environment,
    starts: Sequence[int],
    distance: int,
    cap: int,
    walk_seeds: Sequence[int],
) -> np.ndarray:
    """Vectorized hitting_time; -1 marks censored walks"""
    starts = np.asarray(starts, dtype=np.int64)
    lo, hi = int(starts.min()) - cap, int(starts.max()) + distance
    omega = env.omegas(lo, hi)
    return simulate_hitting(omega, lo, starts, distance, cap, seed_array(walk_seeds))


@dataclass
class BacktrackTail:
    """Empirical tail P(backtrack >= k) for k = 0..K with standard errors"""
    k: np.ndarray
    tail: np.ndarray
    stderr: np.ndarray
    samples: int
    measure: str

    def at(self, k: int) -> float:
        return float(self.tail[k]) if k < len(self.tail) else 0.0


def backtrack_tail(
    env: Environment,
    starts: Sequence[int],
    horizon: int,
    replicas: int,
    seed: int,
    mode: SeedMode = SeedMode.QUENCHED,
    measure: str = "below_start",
    k_max: Optional[int] = None,
) -> BacktrackTail:
    """Empirical tail of how far walks fall back within horizon steps

    Args:
        env: Environment (its spec alone is used when mode is AVERAGED)
        starts: Starting sites
        horizon: Steps per walk
        replicas: Walks per starting site
        seed: Master seed for walk (and, averaged, environment) seeds
        mode: QUENCHED keeps env fixed; AVERAGED draws one environment per replica
        measure: "below_start" (start - min position, the event {T_-k < horizon})
            or "drawdown" (largest fall below a running record)
        k_max: Largest k reported (default: largest observed value)

    Returns:
        BacktrackTail, non-increasing in k by construction
    """
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    if measure not in ("below_start", "drawdown"):
        raise ValueError(f"unknown backtrack measure: {measure}")
    starts = np.asarray(starts, dtype=np.int64)
    walk_starts = np.tile(starts, replicas)
    replica_ids = np.repeat(np.arange(replicas, dtype=np.int64), len(starts))
    walk_seeds = derive_seeds(seed, Stream.WALK, replica_ids, walk_starts)
    lo, hi = int(starts.min()) - horizon, int(starts.max()) + horizon
    if mode == SeedMode.QUENCHED:
        batch = simulate_walks(env.omegas(lo, hi), lo, walk_starts, horizon, walk_seeds)
    else:
        env_seeds = derive_seeds(seed, Stream.ENVIRONMENT, np.arange(replicas))
        omega = omega_grid(env.spec, env_seeds, lo, hi)
        batch = simulate_walks(omega, lo, walk_starts, horizon, walk_seeds, rows=replica_ids)
    if measure == "below_start":
        depth = batch.starts - batch.minimum
    else:
        depth = batch.drawdown
    top = int(depth.max()) if k_max is None else int(k_max)
    k = np.arange(top + 1)
    tail = (depth[None, :] >= k[:, None]).mean(axis=1)
    stderr = np.sqrt(tail * (1.0 - tail) / len(depth))
    return BacktrackTail(k, tail, stderr, len(depth), measure)


def empirical_speed(batch: WalkBatch) -> Tuple[float, float]:
    """Mean displacement per step and its standard error"""
    v = batch.displacement / max(batch.steps, 1)
    stderr = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), stderr
