"""Entropy rates of partitions and the Kolmogorov-Sinai supremum.

For a partition P the join entropies H_n = H(P v T^{-1}P v ... v T^{-(n-1)}P)
are computed either exactly (piecewise-affine maps, translations) or by
counting itineraries of a deterministic sample. The rate is read off the
conditional entropies d_n = H_n - H_{n-1} at the largest reliable n; it is
flagged converged when the last three d_n agree within `conv_tol` bits.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.special import digamma

from ..errors import StatisticsError, UnsupportedError
from .partition import Box, DyadicPartition, FinitePartition, PartitionFamily, SamplingPlan
from .polygons import exact_join_entropies, interval_join_entropies
from .systems import PointMapSystem

MIN_OCCUPANCY = 16
CONV_TOL = 0.02
MIN_LEVELS = 4
ESTIMATORS = ("plugin", "grassberger")


def _grassberger_G(n):
    n = np.asarray(n, dtype=float)
    sign = np.where(np.mod(n, 2) == 0, 1.0, -1.0)
    return digamma(n) + 0.5 * sign * (digamma((n + 1) / 2) - digamma(n / 2))


def count_entropy(counts: np.ndarray, estimator: str = "plugin") -> float:
    counts = np.asarray(counts)
    counts = counts[counts > 0]
    N = counts.sum()
    if N == 0:
        return 0.0
    if estimator == "plugin":
        w = counts / N
        return float(-(w * np.log2(w)).sum())
    if estimator == "grassberger":
        return float((math.log(N) - (counts * _grassberger_G(counts)).sum() / N) / math.log(2))
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


@dataclass
class JoinLevels:
    entropies: list
    atoms: list
    stop_reason: str


def join_entropies(label_stream: Iterable[np.ndarray], n_max: int, min_occupancy: float = MIN_OCCUPANCY,
                   estimator: str = "plugin", weights: Optional[np.ndarray] = None) -> JoinLevels:
    """Join entropies from per-step atom labels of a common set of samples.

    Level n is kept only while samples / occupied atoms >= min_occupancy.
    With `weights` the samples carry (normalised) probability weights
    instead of unit counts; only the plug-in estimator applies then.
    """
    H, atoms = [], []
    code = None
    reason = "n_max reached"
    for n, lab in enumerate(label_stream, start=1):
        if n > n_max:
            break
        lab = np.asarray(lab, dtype=np.int64)
        if code is None:
            _, code = np.unique(lab, return_inverse=True)
        else:
            width = int(lab.max()) + 1 if lab.size else 1
            _, code = np.unique(code * width + lab, return_inverse=True)
        code = code.ravel()
        counts = np.bincount(code)
        occupied = int((counts > 0).sum())
        N = code.size
        if N / occupied < min_occupancy:
            reason = f"undersampled at n={n} ({N} samples, {occupied} atoms)"
            break
        if weights is None:
            H.append(count_entropy(counts, estimator))
        else:
            w = np.bincount(code, weights=weights)
            H.append(_weighted_entropy(w))
        atoms.append(occupied)
    return JoinLevels(H, atoms, reason)


def _weighted_entropy(w):
    w = np.asarray(w, dtype=float)
    w = w[w > 0]
    w = w / w.sum()
    return float(-(w * np.log2(w)).sum())


@dataclass
class RateEstimate:
    partition: str
    depth: Optional[int]
    entropies: list
    differences: list
    rate: float
    n_used: int
    converged: bool
    method: str
    samples: Optional[int] = None
    spread: Optional[float] = None
    note: str = ""
    negativity_mass: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "partition": self.partition, "depth": self.depth, "method": self.method,
            "samples": self.samples, "n_used": self.n_used, "rate": self.rate,
            "converged": self.converged, "spread": self.spread,
            "entropies": list(self.entropies), "differences": list(self.differences),
            "negativity_mass": self.negativity_mass, "note": self.note,
        }


def rate_from_entropies(H, partition: str, depth, method: str, samples=None, note: str = "",
                        conv_tol: float = CONV_TOL, min_levels: int = MIN_LEVELS) -> RateEstimate:
    if len(H) < min_levels:
        raise StatisticsError(
            f"{partition}: only {len(H)} reliable refinement levels (need {min_levels}); {note}")
    d = [H[0]] + [H[i] - H[i - 1] for i in range(1, len(H))]
    tail = d[-3:]
    spread = float(max(tail) - min(tail))
    return RateEstimate(partition, depth, list(map(float, H)), list(map(float, d)), float(d[-1]), len(H),
                        spread <= conv_tol, method, samples, spread, note)


def _label_stream(system: PointMapSystem, partition: FinitePartition, q, p):
    while True:
        yield partition.label(q, p)
        q, p = system.step(q, p)


def _exact_available(system: PointMapSystem, partition: FinitePartition) -> bool:
    return (system.exact is not None and isinstance(partition, DyadicPartition)
            and isinstance(system.domain, Box) and system.domain.is_unit()
            and partition.box.same_region(system.domain))


def entropy_rate(system: PointMapSystem, partition: FinitePartition, n_max: int,
                 plan: Optional[SamplingPlan] = None, method: str = "auto",
                 min_occupancy: float = MIN_OCCUPANCY, estimator: str = "plugin",
                 conv_tol: float = CONV_TOL, max_pieces: int = 1_500_000) -> RateEstimate:
    """Entropy rate h(T, P) from the conditional entropies of successive joins."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if method not in ("auto", "exact", "sampled"):
        raise ValueError("method must be 'auto', 'exact' or 'sampled'")
    exact_ok = _exact_available(system, partition)
    if method == "exact" and not exact_ok:
        raise UnsupportedError(f"no exact counting available for {system.name} with {partition.name}")
    depth = getattr(partition, "depth", None)
    if exact_ok and method != "sampled":
        m = partition.side
        if system.exact.kind == "translation":
            ax, ay = system.exact.shift
            hx = interval_join_entropies(ax, m, n_max)
            hy = interval_join_entropies(ay, m, n_max)
            H = [a + b for a, b in zip(hx, hy)]
            return rate_from_entropies(H, partition.name, depth, "exact-intervals", None,
                                       "n_max reached", conv_tol)
        res = exact_join_entropies(system.exact.branches, m, n_max, system.exact.torus, max_pieces)
        return rate_from_entropies(res.entropies, partition.name, depth, "exact-polygons", None,
                                   res.stop_reason, conv_tol)
    plan = plan or SamplingPlan()
    q, p = system.sample(plan)
    lv = join_entropies(_label_stream(system, partition, q, p), n_max, min_occupancy, estimator)
    return rate_from_entropies(lv.entropies, partition.name, depth, f"sampled-{estimator}", q.size,
                               lv.stop_reason, conv_tol)


@dataclass
class EntropyReport:
    system: str
    rows: list
    ks_estimate: Optional[float]
    inconclusive: bool
    best_effort: Optional[float]
    monotone_in_depth: bool
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "system": self.system, "ks_estimate": self.ks_estimate, "inconclusive": self.inconclusive,
            "best_effort": self.best_effort, "monotone_in_depth": self.monotone_in_depth,
            "settings": self.settings, "rows": [r.to_dict() for r in self.rows],
        }


def _failed_row(partition: FinitePartition, exc: Exception) -> RateEstimate:
    return RateEstimate(partition.name, getattr(partition, "depth", None), [], [], float("nan"), 0,
                        False, "failed", None, None, str(exc))


def summarize(system_name: str, rows: list, settings: dict, conv_tol: float = CONV_TOL) -> EntropyReport:
    """Supremum over converged rows; if none converged the report is inconclusive."""
    conv = [r.rate for r in rows if r.converged]
    usable = [r.rate for r in rows if r.n_used >= 2 and math.isfinite(r.rate)]
    rates = [r.rate for r in rows if math.isfinite(r.rate)]
    monotone = all(b >= a - conv_tol for a, b in zip(rates, rates[1:]))
    return EntropyReport(system_name, rows, max(conv) if conv else None, not conv,
                         max(usable) if usable else None, monotone, settings)


def workers_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("MOYALKS_WORKERS", default)))
    except ValueError:
        return default


def ks_entropy(system: PointMapSystem, family: PartitionFamily, n_max: int,
               plan: Optional[SamplingPlan] = None, method: str = "auto",
               min_occupancy: float = MIN_OCCUPANCY, estimator: str = "plugin",
               conv_tol: float = CONV_TOL, workers: Optional[int] = None,
               max_pieces: int = 1_500_000) -> EntropyReport:
    """Kolmogorov-Sinai estimate: supremum of converged partition rates.

    Each row is independent, so rows may be computed in parallel; results
    are merged in family order and do not depend on the worker count.
    """
    plan = plan or SamplingPlan()

    def one(P):
        try:
            return entropy_rate(system, P, n_max, plan, method, min_occupancy, estimator, conv_tol,
                                max_pieces)
        except StatisticsError as exc:
            return _failed_row(P, exc)

    workers = workers or workers_from_env()
    if workers > 1 and len(family) > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, family.partitions))
    else:
        rows = [one(P) for P in family]
    settings = {"n_max": n_max, "method": method, "plan": plan.to_dict(), "min_occupancy": min_occupancy,
                "estimator": estimator, "conv_tol": conv_tol}
    return summarize(system.name, rows, settings, conv_tol)
