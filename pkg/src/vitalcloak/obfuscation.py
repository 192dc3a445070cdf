"""Key generation, multiset encryption/decryption and the collision bound.

Frequencies live on a discrete BPM grid ``low + i * resolution``. Internally
grid points are handled by integer index so that equality is exact.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

DISTRIBUTIONS = ("uniform", "triangular")


class ObfuscationError(ValueError):
    """Invalid scheme parameters."""


class DecryptionError(ValueError):
    """The observed multiset is not consistent with the key."""


@dataclass(frozen=True)
class FrequencySpace:
    low: float = 45.0
    high: float = 180.0
    resolution: float = 135.0 / 65535
    distribution: str = "uniform"

    def __post_init__(self) -> None:
        if not (self.high > self.low and self.resolution > 0):
            raise ObfuscationError("need high > low and resolution > 0")
        if self.distribution not in DISTRIBUTIONS:
            raise ObfuscationError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.N < 2:
            raise ObfuscationError("frequency space needs at least 2 grid points")

    @classmethod
    def with_points(cls, low: float, high: float, n: int, distribution: str = "uniform") -> "FrequencySpace":
        """Space over [low, high] with exactly ``n`` grid points."""
        if n < 2:
            raise ObfuscationError("n must be >= 2")
        return cls(low, high, (high - low) / (n - 1), distribution)

    @property
    def N(self) -> int:
        # tolerate float round-off in (high - low) / resolution
        return int(math.floor((self.high - self.low) / self.resolution + 1e-9)) + 1

    def value(self, index):
        return self.low + np.asarray(index) * self.resolution

    def index(self, freq: float) -> int:
        """Grid index of ``freq``; raises if it is not on the grid."""
        pos = (freq - self.low) / self.resolution
        i = int(round(pos))
        if abs(pos - i) > 1e-6 or not 0 <= i < self.N:
            raise ObfuscationError(f"{freq} BPM is not on the grid of {self}")
        return i

    def snap(self, freq: float) -> float:
        """Canonical float for a grid frequency."""
        return float(self.value(self.index(freq)))

    def contains(self, freq: float) -> bool:
        try:
            self.index(freq)
        except ObfuscationError:
            return False
        return True

    def weights(self) -> np.ndarray:
        """Probability mass per grid point."""
        if self.distribution == "uniform":
            return np.full(self.N, 1.0 / self.N)
        i = np.arange(self.N)
        w = np.minimum(i + 1, self.N - i).astype(float)
        return w / w.sum()

    def sample_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.distribution == "uniform":
            return rng.integers(0, self.N, size=size)
        return rng.choice(self.N, size=size, p=self.weights())

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "resolution": self.resolution,
                "distribution": self.distribution}

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencySpace":
        return cls(float(d["low"]), float(d["high"]), float(d["resolution"]),
                   d.get("distribution", "uniform"))


@dataclass(frozen=True)
class ObfuscationKey:
    frequencies: tuple[float, ...]
    space: FrequencySpace = field(default_factory=FrequencySpace)
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "frequencies", tuple(self.space.snap(f) for f in self.frequencies))

    @property
    def p(self) -> int:
        return len(self.frequencies)

    def to_dict(self) -> dict:
        return {"p": self.p, "space": self.space.to_dict(),
                "frequencies": list(self.frequencies), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ObfuscationKey":
        key = cls(tuple(d["frequencies"]), FrequencySpace.from_dict(d["space"]), d.get("seed"))
        if key.p != int(d["p"]):
            raise ObfuscationError("key file p does not match its frequency list")
        return key


@dataclass(frozen=True)
class FrequencyMultiset:
    """Multiset of grid frequencies; stored sorted, duplicates kept."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(sorted(float(v) for v in self.values)))

    def counts(self) -> Counter:
        return Counter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_collision(self) -> bool:
        return len(set(self.values)) < len(self.values)


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    return np.random.default_rng(seed), seed


def gen(p: int, space: FrequencySpace | None = None, rng=0, distinct: bool = False) -> ObfuscationKey:
    """Draw ``p`` decoy rates i.i.d. from ``space``.

    ``rng`` is a Generator or an integer seed (recorded in the key). Draws are
    with replacement unless ``distinct`` is set.
    """
    if int(p) != p or p < 1:
        raise ObfuscationError("p must be a positive integer")
    space = space or FrequencySpace()
    gen_rng, seed = _as_rng(rng)
    if distinct:
        if p > space.N:
            raise ObfuscationError("cannot draw more distinct frequencies than grid points")
        idx: list[int] = []
        while len(idx) < p:
            i = int(space.sample_indices(gen_rng, 1)[0])
            if i not in idx:
                idx.append(i)
    else:
        idx = [int(i) for i in space.sample_indices(gen_rng, p)]
    freqs = tuple(float(space.value(i)) for i in idx)
    return ObfuscationKey(freqs, space, seed)


def enc_model(key: ObfuscationKey, m: float) -> FrequencyMultiset:
    """Abstract ciphertext {m} + k."""
    if key.p == 0:
        raise ObfuscationError("key is empty")
    if not key.space.contains(m):
        raise ObfuscationError(f"message {m} BPM is not on the key's grid")
    return FrequencyMultiset((key.space.snap(m),) + key.frequencies)


def dec(key: ObfuscationKey, c: FrequencyMultiset | Iterable[float]) -> float:
    """Multiset difference c - k, which must leave exactly one element."""
    values = c.values if isinstance(c, FrequencyMultiset) else tuple(c)
    remaining = Counter(key.space.snap(v) if key.space.contains(v) else float(v) for v in values)
    for f in key.frequencies:
        if remaining[f] == 0:
            raise DecryptionError(f"key element {f} BPM absent from the observation")
        remaining[f] -= 1
    left = list(remaining.elements())
    if len(left) != 1:
        raise DecryptionError(f"expected one remaining frequency, got {len(left)}")
    return left[0]


def collision_bound(p: int, N: int) -> float:
    """Union bound p(p+1)/(2N) on any two of the p+1 draws coinciding."""
    if p < 1 or N < 1:
        raise ObfuscationError("need p >= 1 and N >= 1")
    return p * (p + 1) / (2.0 * N)


def guess_probability(p: int) -> float:
    """Success rate of a blind guess among p+1 candidates."""
    if p < 1:
        raise ObfuscationError("need p >= 1")
    return 1.0 / (p + 1)


def save_key(key: ObfuscationKey, path) -> None:
    Path(path).write_text(json.dumps(key.to_dict(), indent=2, sort_keys=True) + "\n")


def load_key(path) -> ObfuscationKey:
    return ObfuscationKey.from_dict(json.loads(Path(path).read_text()))
