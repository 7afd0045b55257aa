"""Measure-preserving point maps used as classical dynamical systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..flow import FlowSpec, flow_map
from ..geometry.poisson import PointMap
from .partition import Box, Disk, Domain, SamplingPlan
from .polygons import AffineBranch, pullback_cell_areas

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class ExactModel:
    """Description that enables exact join entropies.

    kind='polygon': piecewise-affine inverse branches on the unit square.
    kind='translation': x -> x + shift on the unit torus.
    """

    kind: str
    branches: tuple = ()
    torus: bool = True
    shift: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class PointMapSystem:
    name: str
    forward: Callable
    domain: Domain
    inverse: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    smooth: bool = True
    exact: Optional[ExactModel] = None
    params: dict = field(default_factory=dict)

    def step(self, q, p):
        q, p = self.forward(q, p)
        return self.domain.wrap(q, p) if self.domain.periodic else (q, p)

    def sample(self, plan: SamplingPlan):
        return plan.points(self.domain)

    def point_map(self) -> PointMap:
        return PointMap(self.forward, self.inverse, self.jacobian, self.name)

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}


def cat_map() -> PointMapSystem:
    """(x, y) -> (2x + y, x + y) mod 1."""

    def fwd(q, p):
        return np.mod(2 * q + p, 1.0), np.mod(q + p, 1.0)

    def inv(q, p):
        return np.mod(q - p, 1.0), np.mod(-q + 2 * p, 1.0)

    def jac(q, p):
        one = np.ones(np.shape(q))
        return 2 * one, one, one, one

    branch = AffineBranch(np.array([[1.0, -1.0], [-1.0, 2.0]]), np.zeros(2))
    return PointMapSystem("cat", fwd, Box(), inv, jac, True, ExactModel("polygon", (branch,), True),
                          {"matrix": [[2, 1], [1, 1]]})


def baker_map() -> PointMapSystem:
    """(x, y) -> (2x mod 1, (y + floor(2x)) / 2)."""

    def fwd(q, p):
        k = np.floor(2 * q)
        return 2 * q - k, (p + k) / 2

    def inv(q, p):
        k = np.floor(2 * p)
        return (q + k) / 2, 2 * p - k

    lower = AffineBranch(np.array([[0.5, 0.0], [0.0, 2.0]]), np.zeros(2), (((0.0, 1.0), 0.5),))
    upper = AffineBranch(np.array([[0.5, 0.0], [0.0, 2.0]]), np.array([0.5, -1.0]), (((0.0, -1.0), -0.5),))
    return PointMapSystem("baker", fwd, Box(periodic=False), inv, None, False,
                          ExactModel("polygon", (lower, upper), False))


def rotation(alpha: float = GOLDEN, beta: float = GOLDEN ** 2) -> PointMapSystem:
    """Torus translation (x + alpha, y + beta) mod 1."""

    def fwd(q, p):
        return np.mod(q + alpha, 1.0), np.mod(p + beta, 1.0)

    def inv(q, p):
        return np.mod(q - alpha, 1.0), np.mod(p - beta, 1.0)

    def jac(q, p):
        one = np.ones(np.shape(q))
        return one, 0 * one, 0 * one, one

    return PointMapSystem("rotation", fwd, Box(), inv, jac, True,
                          ExactModel("translation", shift=(alpha, beta)),
                          {"alpha": alpha, "beta": beta})


def standard_map(K: float) -> PointMapSystem:
    """Chirikov map p' = p + K sin q, q' = q + p' on the 2 pi torus."""
    tau = 2 * np.pi

    def fwd(q, p):
        p1 = p + K * np.sin(q)
        return np.mod(q + p1, tau), np.mod(p1, tau)

    def inv(q, p):
        q0 = q - p
        return np.mod(q0, tau), np.mod(p - K * np.sin(q0), tau)

    def jac(q, p):
        c = K * np.cos(q)
        return 1 + c, np.ones_like(c), c, np.ones_like(c)

    return PointMapSystem(f"standard(K={K:g})", fwd, Box(0.0, 0.0, tau, tau), inv, jac, True, None,
                          {"K": K})


def from_flow(spec: FlowSpec, domain: Optional[Domain] = None) -> PointMapSystem:
    """Classical time-one map of a flow, as a system on `domain`.

    Kicked flows default to their torus; autonomous flows need an invariant
    region (for a harmonic oscillator any centred disk).
    """
    space = spec.space
    if domain is None:
        if space.kind != "torus":
            raise ValueError("plane-window flows need an explicit invariant domain")
        domain = Box(0.0, 0.0, space.Lq, space.Lp)
    pm = flow_map(spec, 1.0)
    return PointMapSystem(spec.name or "flow", pm.forward, domain, pm.inverse, pm.jacobian, True, None,
                          {"hbar": spec.hbar})


def harmonic_time_one(omega: float = 1.0, radius: float = 4.0) -> PointMapSystem:
    """Time-one map of the harmonic oscillator on a centred disk (a rotation)."""
    sys = from_flow(FlowSpec.harmonic(omega, 0.0, L=2 * radius), Disk(radius))
    return PointMapSystem(f"harmonic(omega={omega:g})", sys.forward, Disk(radius), sys.inverse,
                          sys.jacobian, True, None, {"omega": omega, "radius": radius})


def measure_preservation_residual(system: PointMapSystem, depth: int = 3,
                                  plan: Optional[SamplingPlan] = None) -> float:
    """Largest violation of mu(T^{-1} C) = mu(C) over dyadic cells C.

    Exact for polygon models; for smooth maps the local form |det DT - 1|
    is checked on the plan's points instead.
    """
    if system.exact is not None and system.exact.kind == "polygon":
        m = 1 << depth
        ar = pullback_cell_areas(system.exact.branches, m, system.exact.torus)
        return float(np.abs(ar - 1.0 / (m * m)).max())
    if system.exact is not None and system.exact.kind == "translation":
        return 0.0
    plan = plan or SamplingPlan(10_000, 0)
    q, p = system.sample(plan)
    a, b, c, d = system.point_map().derivative(q, p)
    return float(np.abs(a * d - b * c - 1.0).max())
