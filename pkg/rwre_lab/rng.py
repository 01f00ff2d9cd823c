# ABOUTME: Counter-based keyed random numbers: every variate is a pure function of its keys.
# ABOUTME: Also derives per-replica seeds from a master seed for quenched and averaged policies.

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

_MASK = 0xFFFF_FFFF_FFFF_FFFF
_GOLDEN = np.uint64(0x9E37_79B9_7F4A_7C15)
_MUL1 = np.uint64(0xBF58_476D_1CE4_E5B9)
_MUL2 = np.uint64(0x94D0_49BB_1331_11EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_UNIT = 2.0 ** -53


class Stream(IntEnum):
    """Stream tags keep variates of different purposes independent"""
    ENVIRONMENT = 1
    WALK = 2
    CONFIG = 3
    DYNAMICS = 4
    SEED = 5
    PROFILE = 6


class SeedMode(Enum):
    """Which measure replicas are drawn under"""
    QUENCHED = "quenched"
    AVERAGED = "averaged"


def seed_array(seeds) -> np.ndarray:
    """Integer seeds as uint64, reduced modulo 2**64 (negatives wrap to two's complement)"""
    if isinstance(seeds, np.ndarray) and seeds.dtype.kind in "iu":
        return seeds.astype(np.uint64)
    flat = np.asarray(seeds, dtype=object).reshape(-1)
    return np.array([int(s) & _MASK for s in flat], dtype=np.uint64).reshape(np.shape(seeds))


def _as_u64(key) -> np.ndarray:
    """Reinterpret an integer key (scalar or array, possibly negative) as uint64"""
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        return np.array([int(key) & _MASK], dtype=np.uint64).reshape(())
    return seed_array(key)


def _mix(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def hash_keys(*keys) -> np.ndarray:
    """Hash a sequence of integer keys (broadcast together) to uint64

    Args:
        *keys: Integers or integer arrays; arrays broadcast against each other

    Returns:
        uint64 array with the broadcast shape of the keys
    """
    return extend_hash(np.full((), _GOLDEN, dtype=np.uint64), *keys)


def extend_hash(h: np.ndarray, *keys) -> np.ndarray:
    """Continue a hash_keys fold with more keys

    extend_hash(hash_keys(a, b), c) == hash_keys(a, b, c), so a prefix shared
    by many variates (say seed and step of a row) is hashed once.
    """
    with np.errstate(over="ignore"):
        for key in keys:
            h = _mix(h ^ (_as_u64(key) + _GOLDEN))
    return h


def uniforms(*keys) -> np.ndarray:
    """Uniform variates in the open interval (0, 1), keyed by integers

    The same keys always give the same value, on every platform.

    Args:
        *keys: Integers or integer arrays (broadcast together)

    Returns:
        float64 array with the broadcast shape of the keys
    """
    return unit_floats(hash_keys(*keys))


def unit_floats(h: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to the open interval (0, 1) using their top 53 bits"""
    return ((h >> _S11).astype(np.float64) + 0.5) * _UNIT


def derive_seed(*keys) -> int:
    """Derive a 63-bit seed from integer keys"""
    return int(hash_keys(Stream.SEED, *keys)) & 0x7FFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class SeedPolicy:
    """Replica seed plan derived from a master seed

    Quenched: one environment (env_seed, or one derived from the master seed)
    shared by every replica; walk/config/dynamics seeds vary.
    Averaged: every seed varies with the replica index.

    Attributes:
        mode: SeedMode.QUENCHED or SeedMode.AVERAGED
        replicas: Number of replicas
        master_seed: Master seed all replica seeds derive from
        env_seed: Fixed environment seed for quenched runs (optional)
    """
    mode: SeedMode
    replicas: int
    master_seed: int
    env_seed: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", SeedMode(self.mode))
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")

    @property
    def quenched(self) -> bool:
        return self.mode == SeedMode.QUENCHED

    def _seeds(self, stream: Stream, salt: int = 0) -> np.ndarray:
        return derive_seeds(self.master_seed, stream, salt, np.arange(self.replicas))

    def fixed_env_seed(self) -> int:
        if self.env_seed is not None:
            return int(self.env_seed)
        return derive_seed(self.master_seed, Stream.ENVIRONMENT)

    def env_seeds(self) -> np.ndarray:
        """One environment seed per replica (all equal when quenched)"""
        if self.quenched:
            return np.full(self.replicas, int(self.fixed_env_seed()) & _MASK, dtype=np.uint64)
        return self._seeds(Stream.ENVIRONMENT)

    def walk_seeds(self, salt: int = 0) -> np.ndarray:
        return self._seeds(Stream.WALK, salt)

    def config_seeds(self, salt: int = 0) -> np.ndarray:
        return self._seeds(Stream.CONFIG, salt)

    def dyn_seeds(self, salt: int = 0) -> np.ndarray:
        return self._seeds(Stream.DYNAMICS, salt)

    def with_master(self, master_seed: int) -> "SeedPolicy":
        return SeedPolicy(self.mode, self.replicas, master_seed, self.env_seed)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "env_seed": self.fixed_env_seed() if self.quenched else None,
        }


def derive_seeds(*keys) -> np.ndarray:
    """Vectorized derive_seed: keys broadcast, one 63-bit seed per element"""
    h = hash_keys(Stream.SEED, *keys)
    return (h & np.uint64(0x7FFF_FFFF_FFFF_FFFF)).astype(np.int64)
