"""Domains, finite partitions, refinements and sampling plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle [q0, q0 + Lq) x [p0, p0 + Lp)."""

    q0: float = 0.0
    p0: float = 0.0
    Lq: float = 1.0
    Lp: float = 1.0
    periodic: bool = True

    @property
    def area(self) -> float:
        return self.Lq * self.Lp

    @property
    def bounds(self) -> "Box":
        return self

    def contains(self, q, p):
        return (q >= self.q0) & (q < self.q0 + self.Lq) & (p >= self.p0) & (p < self.p0 + self.Lp)

    def wrap(self, q, p):
        return (self.q0 + np.mod(q - self.q0, self.Lq), self.p0 + np.mod(p - self.p0, self.Lp))

    def from_unit(self, u, v):
        return self.q0 + self.Lq * u, self.p0 + self.Lp * v

    def is_unit(self) -> bool:
        return self.same_region(Box())

    def same_region(self, other) -> bool:
        return isinstance(other, Box) and (self.q0, self.p0, self.Lq, self.Lp) == \
            (other.q0, other.p0, other.Lq, other.Lp)


@dataclass(frozen=True)
class Disk:
    radius: float
    center: tuple = (0.0, 0.0)

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    @property
    def bounds(self) -> Box:
        r = self.radius
        return Box(self.center[0] - r, self.center[1] - r, 2 * r, 2 * r, periodic=False)

    @property
    def periodic(self) -> bool:
        return False

    def contains(self, q, p):
        return (q - self.center[0]) ** 2 + (p - self.center[1]) ** 2 < self.radius ** 2

    def wrap(self, q, p):
        return q, p

    def from_unit(self, u, v):
        # area-preserving square-to-disk map, keeps stratification
        r = self.radius * np.sqrt(u)
        th = 2 * np.pi * v
        return self.center[0] + r * np.cos(th), self.center[1] + r * np.sin(th)


Domain = Union[Box, Disk]


# ---------------------------------------------------------------- partitions

@dataclass(frozen=True)
class FinitePartition:
    """Measurable partition given by a vectorised labelling function."""

    labeler: Callable
    n_atoms: int
    name: str = "partition"

    def label(self, q, p) -> np.ndarray:
        lab = np.asarray(self.labeler(q, p), dtype=np.int64)
        if lab.size and (lab.min() < 0 or lab.max() >= self.n_atoms):
            raise ValueError(f"{self.name}: labels outside 0..{self.n_atoms - 1}")
        return lab

    def indicator(self, i: int) -> Callable:
        return lambda q, p: (self.label(q, p) == i).astype(float)


@dataclass(frozen=True)
class DyadicPartition(FinitePartition):
    """2^depth x 2^depth equal cells on a box."""

    box: Box = field(default_factory=Box)
    depth: int = 1

    @classmethod
    def on(cls, box: Box, depth: int) -> "DyadicPartition":
        if depth < 0:
            raise ValueError("depth must be non-negative")
        m = 1 << depth

        def labeler(q, p):
            i = np.floor((np.asarray(q) - box.q0) / box.Lq * m).astype(np.int64)
            j = np.floor((np.asarray(p) - box.p0) / box.Lp * m).astype(np.int64)
            return np.clip(i, 0, m - 1) * m + np.clip(j, 0, m - 1)

        return cls(labeler, m * m, f"dyadic(depth={depth})", box, depth)

    @property
    def side(self) -> int:
        return 1 << self.depth


def entropy_bits(weights) -> float:
    """-sum w log2 w over the positive entries of a probability vector."""
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        return 0.0
    w = w / w.sum()
    return float(-(w * np.log2(w)).sum())


def partition_entropy(partition: FinitePartition, domain: Optional[Domain] = None,
                      plan: Optional["SamplingPlan"] = None) -> float:
    """Entropy of a partition under the normalized Liouville measure on `domain`.

    Dyadic partitions of their own box are evaluated exactly; anything else
    is estimated from the sampling plan.
    """
    if isinstance(partition, DyadicPartition) and (domain is None or partition.box.same_region(domain)):
        return float(2 * partition.depth)
    if domain is None or plan is None:
        raise ValueError("a domain and sampling plan are needed for this partition")
    q, p = plan.points(domain)
    counts = np.bincount(partition.label(q, p), minlength=partition.n_atoms)
    return entropy_bits(counts)


def coarsest_refinement(P1: FinitePartition, P2: FinitePartition) -> FinitePartition:
    """Atoms A_i n B_j; empty intersections simply never receive a label."""
    n2 = P2.n_atoms
    return FinitePartition(lambda q, p: P1.label(q, p) * n2 + P2.label(q, p),
                           P1.n_atoms * n2, f"({P1.name} v {P2.name})")


@dataclass(frozen=True)
class PartitionFamily:
    partitions: tuple

    @classmethod
    def dyadic(cls, box: Box, depths: Sequence[int]) -> "PartitionFamily":
        return cls(tuple(DyadicPartition.on(box, int(d)) for d in depths))

    def __iter__(self):
        return iter(self.partitions)

    def __len__(self):
        return len(self.partitions)


# ------------------------------------------------------------- sampling plans

@dataclass(frozen=True)
class SamplingPlan:
    """Deterministic sample of the normalized Liouville measure.

    With `stratified` the unit square is cut into floor(sqrt(n))^2 strata
    and one jittered point is drawn per stratum, so the realised sample
    size is the largest square not above n_samples.
    """

    n_samples: int = 1_000_000
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    @property
    def size(self) -> int:
        if self.stratified:
            return math.isqrt(self.n_samples) ** 2
        return self.n_samples

    def unit_points(self):
        rng = np.random.default_rng(self.seed)
        if self.stratified:
            m = math.isqrt(self.n_samples)
            i, j = np.divmod(np.arange(m * m), m)
            u = (i + rng.random(m * m)) / m
            v = (j + rng.random(m * m)) / m
            return u, v
        return rng.random(self.n_samples), rng.random(self.n_samples)

    def points(self, domain: Domain):
        u, v = self.unit_points()
        return domain.from_unit(u, v)

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "seed": self.seed, "stratified": self.stratified}
