"""Counter-based random streams and the scalar samplers used in simulations.

Streams are Philox generators keyed by ``(seed, key...)`` through
``SeedSequence.spawn_key``, so any sub-stream can be regenerated on its own
regardless of how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the sub-stream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit seed for the sub-stream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


KINDS = ("normal", "uniform", "gamma", "student_t")


@dataclass(frozen=True)
class Dist:
    """A tagged scalar distribution.

    ``normal(mu, var)`` takes the variance; ``uniform(a, b)``; ``gamma(shape,
    scale)``; ``student_t(df)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        k, p = self.kind, self.params
        need = {"normal": 2, "uniform": 2, "gamma": 2, "student_t": 1}
        if k not in need:
            raise ValueError(f"unknown distribution {k!r}; expected one of {KINDS}")
        if len(p) != need[k] or not all(math.isfinite(x) for x in p):
            raise ValueError(f"{k} needs {need[k]} finite parameters, got {p}")
        if k == "normal" and p[1] < 0:
            raise ValueError("normal variance must be nonnegative")
        if k == "uniform" and p[0] > p[1]:
            raise ValueError("uniform needs a <= b")
        if k == "gamma" and (p[0] <= 0 or p[1] <= 0):
            raise ValueError("gamma shape and scale must be positive")
        if k == "student_t" and p[0] <= 0:
            raise ValueError("student_t df must be positive")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "normal":
            return rng.normal(p[0], math.sqrt(p[1]), size)
        if k == "uniform":
            return rng.uniform(p[0], p[1], size)
        if k == "gamma":
            return rng.gamma(p[0], p[1], size)
        return rng.standard_t(p[0], size)

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k in ("normal",):
            return p[0]
        if k == "uniform":
            return 0.5 * (p[0] + p[1])
        if k == "gamma":
            return p[0] * p[1]
        return 0.0 if p[0] > 1 else math.nan

    @property
    def var(self) -> float:
        k, p = self.kind, self.params
        if k == "normal":
            return p[1]
        if k == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if k == "gamma":
            return p[0] * p[1] ** 2
        return p[0] / (p[0] - 2.0) if p[0] > 2 else math.inf

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(f'{x:g}' for x in self.params)})"


def normal(mu: float = 0.0, var: float = 1.0) -> Dist:
    return Dist("normal", (mu, var))


def uniform(a: float, b: float) -> Dist:
    return Dist("uniform", (a, b))


def gamma(shape: float, scale: float) -> Dist:
    return Dist("gamma", (shape, scale))


def student_t(df: float) -> Dist:
    return Dist("student_t", (df,))
