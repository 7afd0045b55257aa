"""Poisson bracket, Hamiltonian vector fields and symplectic residuals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .observable import Observable, align, check_resolution, convolve_modes


def poisson_bracket(f: Observable, g: Observable) -> Observable:
    """{f, g} = df/dq dg/dp - df/dp dg/dq.

    Polynomials stay exact, sparse Fourier inputs stay sparse, everything
    else goes through spectral derivatives on the shared grid.
    """
    a, b = align(f, g)
    if a.kind == "poly":
        return a.derivative(1, 0) * b.derivative(0, 1) - a.derivative(0, 1) * b.derivative(1, 0)
    if a.kind == "fourier":
        space = a.space
        cq, cp = 2 * np.pi / space.Lq, 2 * np.pi / space.Lp

        def weight(k1, k2):
            # (i kq)(i k'p) - (i kp)(i k'q)
            return -(cq * cp) * (k1[..., 0] * k2[..., 1] - k1[..., 1] * k2[..., 0])

        return Observable.fourier(convolve_modes(a.modes, b.modes, weight), space)
    for x, orig in ((a, f), (b, g)):
        if orig.kind == "grid":
            check_resolution(x.values, what="bracket operand")
    fq, fp = _grid_grad(f, a.space)
    gq, gp = _grid_grad(g, a.space)
    return Observable.grid(fq * gp - fp * gq, a.space)


def _grid_grad(f: Observable, space):
    if f.kind == "grid":
        return f.derivative(1, 0).values, f.derivative(0, 1).values
    src = f.with_space(space) if f.kind == "poly" else f
    return src.derivative(1, 0).on_grid(space), src.derivative(0, 1).on_grid(space)


@dataclass(frozen=True)
class VectorField:
    """Components (dq/dt, dp/dt) of a vector field as observables."""

    dq: Observable
    dp: Observable

    def __call__(self, q, p):
        return self.dq.evaluate(q, p), self.dp.evaluate(q, p)


def hamiltonian_vector_field(H: Observable) -> VectorField:
    """X_H = (dH/dp, -dH/dq), so that df/dt = {f, H} along its flow."""
    if H.kind == "grid":
        check_resolution(H.values, what="Hamiltonian")
    return VectorField(H.derivative(0, 1), -H.derivative(1, 0))


@dataclass(frozen=True)
class PointMap:
    """A map of the plane given as vectorised callables.

    `jacobian(q, p)` returns the four entries (dq'/dq, dq'/dp, dp'/dq,
    dp'/dp). Without it, central differences are used.
    """

    forward: Callable
    inverse: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    name: str = "map"

    def __call__(self, q, p):
        return self.forward(q, p)

    def derivative(self, q, p, h: float = 1e-3):
        """Jacobian entries; fourth-order central differences without a jacobian."""
        if self.jacobian is not None:
            return tuple(np.asarray(x, dtype=float) for x in self.jacobian(q, p))
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)

        def diff(dq, dp):
            f1q, f1p = self.forward(q + dq, p + dp)
            b1q, b1p = self.forward(q - dq, p - dp)
            f2q, f2p = self.forward(q + 2 * dq, p + 2 * dp)
            b2q, b2p = self.forward(q - 2 * dq, p - 2 * dp)
            return ((8 * (f1q - b1q) - (f2q - b2q)) / (12 * h),
                    (8 * (f1p - b1p) - (f2p - b2p)) / (12 * h))

        dqq, dpq = diff(h, 0.0)
        dqp, dpp = diff(0.0, h)
        return dqq, dqp, dpq, dpp

    @staticmethod
    def coerce(phi) -> "PointMap":
        return phi if isinstance(phi, PointMap) else PointMap(phi)


def symplectic_check(phi, f: Observable, g: Observable, q, p) -> np.ndarray:
    """Pointwise residual {f o phi, g o phi}(x) - {f, g}(phi(x)).

    The composed bracket is expanded with the chain rule through the
    Jacobian of phi, so f and g may be in any representation.
    """
    phi = PointMap.coerce(phi)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    Q, P = phi(q, p)
    a, b, c, d = phi.derivative(q, p)
    fq, fp = f.derivative(1, 0).evaluate(Q, P), f.derivative(0, 1).evaluate(Q, P)
    gq, gp = g.derivative(1, 0).evaluate(Q, P), g.derivative(0, 1).evaluate(Q, P)
    # gradients of the compositions
    Fq, Fp = fq * a + fp * c, fq * b + fp * d
    Gq, Gp = gq * a + gp * c, gq * b + gp * d
    lhs = Fq * Gp - Fp * Gq
    rhs = fq * gp - fp * gq
    return lhs - rhs
