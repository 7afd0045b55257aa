"""Largest Lyapunov exponent by tangent-vector renormalisation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import UnsupportedError
from .partition import SamplingPlan
from .systems import PointMapSystem


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float          # bits per iteration
    stderr: float
    n_points: int
    n_steps: int

    @property
    def nats(self) -> float:
        return self.value * math.log(2)


def lyapunov_exponent(system: PointMapSystem, n_steps: int = 2000, n_points: int = 256,
                      transient: int = 100, seed: int = 0) -> LyapunovEstimate:
    """Average log growth rate of tangent vectors along sampled orbits.

    The estimate is the mean over orbits started from a stratified sample;
    stderr is the spread across orbits divided by sqrt(n_points).
    """
    if not system.smooth:
        raise UnsupportedError(f"{system.name} is not differentiable; no Lyapunov exponent")
    pm = system.point_map()
    q, p = system.sample(SamplingPlan(n_points, seed))
    for _ in range(transient):
        q, p = system.step(q, p)
    vq = np.ones_like(q) / math.sqrt(2)
    vp = np.ones_like(q) / math.sqrt(2)
    acc = np.zeros_like(q)
    for _ in range(n_steps):
        a, b, c, d = pm.derivative(q, p)
        vq, vp = a * vq + b * vp, c * vq + d * vp
        norm = np.hypot(vq, vp)
        acc += np.log2(norm)
        vq, vp = vq / norm, vp / norm
        q, p = system.step(q, p)
    per = acc / n_steps
    return LyapunovEstimate(float(per.mean()), float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1
                            else 0.0, int(per.size), n_steps)


def pesin_gap(ks: Optional[float], lyap: LyapunovEstimate) -> Optional[float]:
    """Relative difference |h - lambda| / lambda between an entropy and a Lyapunov exponent."""
    if ks is None or lyap.value <= 0:
        return None
    return abs(ks - lyap.value) / lyap.value
