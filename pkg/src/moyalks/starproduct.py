"""Moyal star product and bracket.

f * g = sum_n (i hbar / 2)^n / n! sum_k C(n, k) (-1)^k
        (d_q^{n-k} d_p^k f) (d_p^{n-k} d_q^k g)

For polynomials the series terminates and is evaluated exactly. For plane
waves it sums to a phase,

    e_k * e_k' = exp(-i hbar (k_q k'_p - k_p k'_q) / 2) e_{k+k'},

which is the closed form used on Fourier data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sympy.polys.domains import QQ_I

from .errors import DegenerateFitError
from .geometry.observable import (ZERO, Observable, align, check_resolution, convolve_modes,
                                  exact, grid_to_modes, to_complex)
from .geometry.poisson import PointMap, poisson_bracket
from .geometry.space import MeasureDescriptor, PhaseSpace, liouville_measure


@dataclass(frozen=True)
class StarConfig:
    """Settings for star products.

    truncation_order=None sums the full series (exact for polynomials and
    in closed form for Fourier data). Grid inputs go through their exact
    plane-wave expansion when fourier_exact is set, otherwise through the
    truncated series with spectral derivatives.
    """

    hbar: object = 0
    truncation_order: Optional[int] = None
    fourier_exact: bool = True
    grid_series_order: int = 6

    def __post_init__(self):
        h = exact(self.hbar)
        if h.y != 0 or h.x < 0:
            raise ValueError("hbar must be a real, non-negative number")
        if self.truncation_order is not None and self.truncation_order < 0:
            raise ValueError("truncation order must be non-negative")

    @property
    def hbar_exact(self):
        return exact(self.hbar)

    @property
    def hbar_float(self) -> float:
        return float(exact(self.hbar).x)


def _config(config, hbar) -> StarConfig:
    if config is None:
        return StarConfig(hbar=0 if hbar is None else hbar)
    if hbar is not None:
        raise TypeError("pass either a StarConfig or hbar, not both")
    return config


def _bidiff(f: Observable, g: Observable, n: int) -> Observable:
    """B_n(f, g) = sum_k C(n, k) (-1)^k d_q^{n-k} d_p^k f * d_p^{n-k} d_q^k g."""
    total = None
    for k in range(n + 1):
        term = f.derivative(n - k, k) * g.derivative(k, n - k)
        c = math.comb(n, k) * (-1) ** k
        term = term.scale(c)
        total = term if total is None else total + term
    return total


def _poly_series(f: Observable, g: Observable, hbar, order: int, odd_only: bool) -> Observable:
    half = QQ_I(0, 1) * hbar / QQ_I(2, 0)
    out = Observable.poly({}, f.space or g.space)
    for n in range(order + 1):
        if odd_only and n % 2 == 0:
            continue
        b = _bidiff(f, g, n)
        if b.is_zero():
            continue
        out = out + b.scale(half ** n / QQ_I(math.factorial(n), 0))
    return out


def _twist_weight(space: PhaseSpace, hbar: float, kind: str):
    cq, cp = 2 * np.pi / space.Lq, 2 * np.pi / space.Lp

    def theta(k1, k2):
        return cq * cp * (k1[..., 0] * k2[..., 1] - k1[..., 1] * k2[..., 0])

    if kind == "product":
        return lambda k1, k2: np.exp(-0.5j * hbar * theta(k1, k2))
    if hbar == 0:
        return lambda k1, k2: -theta(k1, k2)
    return lambda k1, k2: -2.0 * np.sin(0.5 * hbar * theta(k1, k2)) / hbar


def _fourier_of(obs: Observable) -> Observable:
    if obs.kind == "grid":
        check_resolution(obs.values, what="star-product operand")
        return Observable.fourier(grid_to_modes(obs.values, obs.space, cutoff=1e-16), obs.space)
    return obs.to_fourier()


def _grid_series(f: Observable, g: Observable, space: PhaseSpace, hbar: float, order: int,
                 odd_only: bool) -> Observable:
    for x in (f, g):
        if x.kind == "grid":
            check_resolution(x.values, what="star-product operand")
    ff = f.with_space(space) if f.kind == "poly" else f
    gg = g.with_space(space) if g.kind == "poly" else g
    total = np.zeros(space.shape, dtype=complex)
    for n in range(order + 1):
        if odd_only and n % 2 == 0:
            continue
        acc = np.zeros(space.shape, dtype=complex)
        for k in range(n + 1):
            acc += math.comb(n, k) * (-1) ** k * (ff.derivative(n - k, k).on_grid(space)
                                                  * gg.derivative(k, n - k).on_grid(space))
        total += (0.5j * hbar) ** n / math.factorial(n) * acc
    return Observable.grid(total, space)


def _dispatch(f, g, cfg: StarConfig, odd_only: bool):
    """Shared engine: full product, or only the odd orders (for the bracket)."""
    a, b = align(f, g)
    h = cfg.hbar_exact
    if a.kind == "poly":
        full = min(a.degree, b.degree)
        order = full if cfg.truncation_order is None else min(full, cfg.truncation_order)
        return _poly_series(a, b, h, max(order, 0), odd_only)
    hf = cfg.hbar_float
    polys = [x for x in (f, g) if x.kind == "poly"]
    if polys:
        # the series terminates at the polynomial's degree, so this is exact up to spectral derivatives
        order = min(x.degree for x in polys)
        if cfg.truncation_order is not None:
            order = min(order, cfg.truncation_order)
        return _grid_series(f, g, a.space, hf, max(order, 0), odd_only)
    if a.kind == "grid" and not cfg.fourier_exact:
        order = cfg.grid_series_order if cfg.truncation_order is None else cfg.truncation_order
        return _grid_series(f, g, a.space, hf, order, odd_only)
    if cfg.truncation_order is not None:
        return _grid_series(f, g, a.space, hf, cfg.truncation_order, odd_only) \
            if a.kind == "grid" else _fourier_series(a, b, hf, cfg.truncation_order, odd_only)
    fa, fb = _fourier_of(f if f.kind != "poly" else a), _fourier_of(g if g.kind != "poly" else b)
    kind = "bracket" if odd_only else "product"
    return Observable.fourier(convolve_modes(fa.modes, fb.modes, _twist_weight(fa.space, hf, kind)),
                              fa.space)


def _fourier_series(a: Observable, b: Observable, hbar: float, order: int, odd_only: bool):
    """Truncated series on sparse Fourier data, mode by mode."""
    space = a.space
    cq, cp = 2 * np.pi / space.Lq, 2 * np.pi / space.Lp

    def weight(k1, k2):
        x = -0.5j * hbar * cq * cp * (k1[..., 0] * k2[..., 1] - k1[..., 1] * k2[..., 0])
        return sum(x ** n / math.factorial(n) for n in range(order + 1) if not (odd_only and n % 2 == 0))

    return Observable.fourier(convolve_modes(a.modes, b.modes, weight), space)


def moyal_product(f: Observable, g: Observable, config: Optional[StarConfig] = None, *,
                  hbar=None) -> Observable:
    cfg = _config(config, hbar)
    return _dispatch(f, g, cfg, odd_only=False)


def moyal_bracket(f: Observable, g: Observable, config: Optional[StarConfig] = None, *,
                  hbar=None) -> Observable:
    """(f * g - g * f) / (i hbar); at hbar = 0 this is the Poisson bracket."""
    cfg = _config(config, hbar)
    if cfg.hbar_exact == ZERO:
        return poisson_bracket(f, g)
    # only odd orders survive the commutator: (2 / (i hbar)) * sum_{n odd}
    odd = _dispatch(f, g, cfg, odd_only=True)
    if odd.kind == "fourier" and cfg.truncation_order is None and f.kind != "poly" and g.kind != "poly":
        return odd
    if odd.kind == "poly":
        return odd.scale(QQ_I(2, 0) / (QQ_I(0, 1) * cfg.hbar_exact))
    return odd.scale(2.0 / (1j * cfg.hbar_float))


def moyal_commutator(f: Observable, g: Observable, config: Optional[StarConfig] = None, *, hbar=None):
    """Plain commutator f * g - g * f, computed from the two products."""
    cfg = _config(config, hbar)
    return moyal_product(f, g, cfg) - moyal_product(g, f, cfg)


# ------------------------------------------------------------- classical limit

@dataclass(frozen=True)
class ClassicalLimitFit:
    slope: float
    prefactor: float
    r_squared: float
    hbars: tuple
    deviations: tuple


def _sample_norm(obs: Observable, points) -> float:
    q, p = points
    v = np.asarray(obs.evaluate(q, p))
    return float(np.sqrt(np.mean(np.abs(v) ** 2)))


def default_points(f: Observable, g: Observable, n: int = 24):
    space = f.space or g.space
    if space is None:
        u = np.linspace(-1.0, 1.0, n)
    else:
        u = None
    if u is not None:
        Q, P = np.meshgrid(u, u, indexing="ij")
        return Q.ravel(), P.ravel()
    q0, p0 = space.origin
    Q, P = np.meshgrid(q0 + space.Lq * (np.arange(n) + 0.5) / n,
                       p0 + space.Lp * (np.arange(n) + 0.5) / n, indexing="ij")
    return Q.ravel(), P.ravel()


def classical_limit_fit(f: Observable, g: Observable, hbars: Optional[Sequence[float]] = None,
                        points=None) -> ClassicalLimitFit:
    """Fit ||{f,g}_hbar - {f,g}|| ~ C hbar^s on a log-log scale.

    The norm is the root-mean-square over `points`. A deviation that is
    zero (for instance when one argument is at most quadratic) has no
    power law and raises DegenerateFitError.
    """
    if hbars is None:
        hbars = np.geomspace(1e-3, 1e-1, 9)
    hbars = [float(h) for h in hbars]
    if len(hbars) < 2 or min(hbars) <= 0:
        raise ValueError("need at least two positive hbar values")
    points = default_points(f, g) if points is None else points
    classical = poisson_bracket(f, g)
    scale = max(_sample_norm(classical, points), 1.0)
    devs = []
    for h in hbars:
        diff = moyal_bracket(f, g, hbar=h) - classical
        if diff.kind == "poly" and diff.is_zero():
            devs.append(0.0)
        else:
            devs.append(_sample_norm(diff, points))
    devs = np.array(devs)
    if np.any(devs <= 1e-14 * scale):
        raise DegenerateFitError(
            "the quantum deviation vanishes (to rounding) for some hbar; the Moyal bracket "
            "coincides with the Poisson bracket for this pair")
    x, y = np.log(hbars), np.log(devs)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2) / ss) if ss > 0 else 1.0
    return ClassicalLimitFit(float(slope), float(np.exp(icpt)), r2, tuple(hbars), tuple(devs.tolist()))


# ------------------------------------------------------- quantum symplectic check

@dataclass(frozen=True)
class SymplecticResidual:
    max_abs: float
    residual: Optional[Observable] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)


def compose(f: Observable, phi) -> Observable:
    """f o phi for a polynomial f and a polynomial map phi = (Q, P)."""
    Qm, Pm = phi
    if f.kind != "poly" or Qm.kind != "poly" or Pm.kind != "poly":
        raise TypeError("exact composition needs polynomial data")
    out = Observable.poly({}, f.space)
    powq = {0: Observable.constant(1)}
    powp = {0: Observable.constant(1)}
    for (i, j), c in f.terms.items():
        for k in range(max(powq), i + 1):
            powq.setdefault(k + 1, powq[k] * Qm)
        for k in range(max(powp), j + 1):
            powp.setdefault(k + 1, powp[k] * Pm)
        out = out + (powq[i] * powp[j]).scale(c)
    return out


def quantum_symplectic_check(phi, f: Observable, g: Observable, hbar, points=None) -> SymplecticResidual:
    """Residual {f o phi, g o phi}_hbar - {f, g}_hbar o phi.

    With a polynomial map (pair of poly observables) and polynomial f, g the
    residual is computed exactly; otherwise f o phi and g o phi are sampled
    on the operands' grid and bracketed through their Fourier expansion.
    """
    if isinstance(phi, tuple) and all(isinstance(x, Observable) for x in phi):
        lhs = moyal_bracket(compose(f, phi), compose(g, phi), hbar=hbar)
        rhs = compose(moyal_bracket(f, g, hbar=hbar), phi)
        res = lhs - rhs
        pts = default_points(f, g) if points is None else points
        vals = np.asarray(res.evaluate(*pts))
        return SymplecticResidual(float(np.max(np.abs(vals))) if vals.size else 0.0, res, vals)
    phi = PointMap.coerce(phi)
    space = f.space or g.space
    if space is None:
        raise ValueError("a phase space is needed to sample non-polynomial data")
    Q, P = space.grid()
    Qm, Pm = phi(Q, P)
    Qm, Pm = space.wrap(Qm, Pm)
    fo = Observable.grid(f.evaluate(Qm, Pm), space)
    go = Observable.grid(g.evaluate(Qm, Pm), space)
    lhs = moyal_bracket(fo, go, hbar=hbar).on_grid(space)
    rhs = moyal_bracket(f, g, hbar=hbar).evaluate(Qm, Pm)
    vals = lhs - rhs
    return SymplecticResidual(float(np.max(np.abs(vals))), None, vals)


# ------------------------------------------------------------ Moyal measure

def trace_residual(f: Observable, g: Observable, hbar) -> float:
    """|integral(f * g) - integral(f g)| per unit area, via the zero mode."""
    fa, ga = align(f, g)
    if fa.kind == "poly":
        raise TypeError("the trace property is checked on periodic (Fourier or grid) data")
    prod = moyal_product(fa, ga, hbar=hbar)
    plain = fa * ga
    pm = prod.modes.get((0, 0), 0) if prod.kind == "fourier" else prod.mean()
    cm = plain.modes.get((0, 0), 0) if plain.kind == "fourier" else plain.mean()
    return float(abs(pm - cm))


def moyal_measure(space: PhaseSpace, hbar=0, normalization: str = "raw") -> MeasureDescriptor:
    """The Moyal trace measure on flat space: Liouville measure plus a trace diagnostic.

    On flat space the density does not depend on hbar; the diagnostic
    `trace_residual(f, g, hbar)` measures the trace property at any hbar.
    """
    StarConfig(hbar)  # validates hbar
    base = liouville_measure(space, normalization)
    return MeasureDescriptor(base.density, base.total_mass, base.normalization, space, trace_residual)


__all__ = [
    "StarConfig", "moyal_product", "moyal_bracket", "moyal_commutator", "classical_limit_fit",
    "ClassicalLimitFit", "quantum_symplectic_check", "SymplecticResidual", "compose",
    "moyal_measure", "trace_residual",
]
