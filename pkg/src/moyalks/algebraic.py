"""Commutative algebraic layer: states, finite subalgebras and endomorphisms.

The commutative algebra L^inf(M, mu) is realised concretely as functions
sampled on the support of a quadrature rule; a state is the normalised
integral against that rule. Finite subalgebras are generated by indicator
projections, and an endomorphism acts by composition with a point map.
Algebraic KS entropy is computed from the state's values on evolved and
multiplied projections, and agrees with the measure-theoretic estimate
of the same system when both use one sampling plan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .entropy.partition import Box, FinitePartition, PartitionFamily, SamplingPlan, entropy_bits
from .entropy.rates import CONV_TOL, MIN_OCCUPANCY, EntropyReport, RateEstimate, rate_from_entropies, summarize
from .entropy.systems import PointMapSystem, from_flow
from .errors import StatisticsError, UnsupportedError
from .flow import FlowSpec, is_point_flow
from .geometry.space import MeasureDescriptor, PhaseSpace, liouville_measure

PROJECTION_TOL = 1e-12


def _values(f, q, p) -> np.ndarray:
    if callable(f):
        return np.broadcast_to(np.asarray(f(q, p)), np.shape(q))
    return np.full(np.shape(q), f)


@dataclass(frozen=True)
class AlgebraicState:
    """Normalised integration against a quadrature rule (q_j, p_j, w_j)."""

    q: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    domain: object = None
    name: str = "state"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != np.shape(self.q) or np.shape(self.q) != np.shape(self.p):
            raise ValueError("quadrature points and weights must have equal shapes")
        if (w < 0).any() or not w.sum() > 0:
            raise ValueError("quadrature weights must be nonnegative with positive total")
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def on_plan(cls, domain, plan: Optional[SamplingPlan] = None) -> "AlgebraicState":
        """Equal-weight state on the points of a sampling plan (Monte Carlo)."""
        plan = plan or SamplingPlan()
        q, p = plan.points(domain)
        return cls(q, p, np.ones(q.size), domain, f"plan(n={q.size}, seed={plan.seed})")

    @classmethod
    def on_grid(cls, space: PhaseSpace, measure: Optional[MeasureDescriptor] = None) -> "AlgebraicState":
        """Rectangle-rule state of a constant-density measure on a grid.

        Exact for trigonometric polynomials resolved by the grid on a torus.
        """
        measure = measure or liouville_measure(space)
        Q, P = space.grid()
        w = np.full(Q.size, measure.density)
        q0, p0 = space.origin
        return cls(Q.ravel(), P.ravel(), w, Box(q0, p0, space.Lq, space.Lp), f"grid{space.shape}")

    @property
    def size(self) -> int:
        return self.weights.size

    def __call__(self, f) -> complex | float:
        return state_of(f, self)


def state_of(f, state: AlgebraicState):
    """omega(f): weighted mean of f over the state's quadrature points."""
    v = _values(f, state.q, state.p)
    out = complex(np.dot(state.weights, v.astype(complex)))
    return out.real if out.imag == 0 else out


# ----------------------------------------------------------- subalgebras

@dataclass(frozen=True)
class FiniteSubalgebra:
    """Abelian subalgebra generated by mutually orthogonal projections.

    The projections are callables (q, p) -> {0, 1}; their validity is
    checked on the support of `state`.
    """

    projections: tuple
    state: AlgebraicState = field(repr=False)
    name: str = "N"

    def __post_init__(self):
        if not self.projections:
            raise ValueError("a subalgebra needs at least one projection")
        self.resolve()

    def resolve(self, q=None, p=None) -> np.ndarray:
        """Index of the projection equal to 1 at each point.

        Raises ValueError unless the generators are {0,1}-valued and sum to
        one there; together these imply mutual orthogonality.
        """
        if q is None:
            q, p = self.state.q, self.state.p
        total = np.zeros(np.shape(q))
        idx = np.zeros(np.shape(q), dtype=np.int64)
        for i, n in enumerate(self.projections):
            v = _values(n, q, p).astype(float)
            if np.abs(v * (1 - v)).max(initial=0.0) > PROJECTION_TOL:
                raise ValueError(f"{self.name}: generators are not projections (values outside {{0, 1}})")
            total += v
            idx[v > 0.5] = i
        if np.abs(total - 1).max(initial=0.0) > PROJECTION_TOL:
            raise ValueError(f"{self.name}: projections are not orthogonal or do not sum to the identity")
        return idx

    @classmethod
    def from_partition(cls, partition: FinitePartition, state: AlgebraicState) -> "FiniteSubalgebra":
        labels = np.unique(partition.label(state.q, state.p))
        projs = tuple(partition.indicator(int(i)) for i in labels)
        return cls(projs, state, partition.name)

    @classmethod
    def trivial(cls, state: AlgebraicState) -> "FiniteSubalgebra":
        return cls((lambda q, p: np.ones(np.shape(q)),), state, "trivial")

    def values(self, q=None, p=None) -> np.ndarray:
        """Projection values, shape (projections, points)."""
        if q is None:
            q, p = self.state.q, self.state.p
        return np.stack([_values(n, q, p).astype(float) for n in self.projections])

    def weights(self) -> np.ndarray:
        return np.bincount(self.resolve(), weights=self.state.weights, minlength=len(self))

    def __len__(self):
        return len(self.projections)


def subalgebra_entropy(N: FiniteSubalgebra, state: Optional[AlgebraicState] = None) -> float:
    """H_omega(N) = -sum omega(n_i) log2 omega(n_i), in bits."""
    state = state or N.state
    w = np.array([state_of(n, state) for n in N.projections], dtype=float)
    return entropy_bits(w)


def _product(a, b):
    return lambda q, p: _values(a, q, p) * _values(b, q, p)


def subalgebra_refinement(N1: FiniteSubalgebra, N2: FiniteSubalgebra) -> FiniteSubalgebra:
    """Coarsest common refinement: pairwise products, zero products dropped."""
    if N1.state is not N2.state:
        raise ValueError("both subalgebras must live on the same state")
    pairs = np.unique(N1.resolve() * len(N2) + N2.resolve())
    projs = [_product(N1.projections[k // len(N2)], N2.projections[k % len(N2)]) for k in pairs]
    return FiniteSubalgebra(tuple(projs), N1.state, f"({N1.name} v {N2.name})")


# -------------------------------------------------------- endomorphisms

@dataclass(frozen=True)
class AlgebraicEndomorphism:
    """Theta(f) = f o T for a point map T (the Koopman operator).

    `points` advances quadrature points one step, so that Theta^k(f) can be
    evaluated as f at the k-th iterate without rebuilding closures.
    """

    points: Callable
    name: str = "Theta"

    @classmethod
    def koopman(cls, T: Callable, name: str = "Theta") -> "AlgebraicEndomorphism":
        return cls(T, name)

    @classmethod
    def from_point_map(cls, system: PointMapSystem) -> "AlgebraicEndomorphism":
        return cls(system.step, f"Theta[{system.name}]")

    @classmethod
    def from_flow(cls, spec: FlowSpec, domain=None) -> "AlgebraicEndomorphism":
        if not is_point_flow(spec):
            raise UnsupportedError("the quantum time-one map is not a point map for this Hamiltonian; "
                                   "its evolved indicators are not projections (use ks_entropy_quantum)")
        return cls.from_point_map(from_flow(spec, domain))

    @classmethod
    def identity(cls) -> "AlgebraicEndomorphism":
        return cls(lambda q, p: (q, p), "identity")

    def __call__(self, f) -> Callable:
        T = self.points
        return lambda q, p: _values(f, *T(q, p))

    def power(self, k: int) -> Callable:
        def act(f):
            def g(q, p):
                for _ in range(k):
                    q, p = self.points(q, p)
                return _values(f, q, p)
            return g
        return act

    def multiplicativity_residual(self, f, g, state: AlgebraicState) -> float:
        lhs = _values(self(_product(f, g)), state.q, state.p)
        rhs = _values(self(f), state.q, state.p) * _values(self(g), state.q, state.p)
        return float(np.abs(lhs - rhs).max())

    def state_residual(self, f, state: AlgebraicState) -> float:
        return float(abs(state_of(self(f), state) - state_of(f, state)))


# ----------------------------------------------------------- entropy

def _algebraic_row(endo: AlgebraicEndomorphism, N: FiniteSubalgebra, n_max: int, min_occupancy: float,
                   conv_tol: float, depth) -> RateEstimate:
    state = N.state
    q, p = state.q, state.p
    code = None
    H = []
    reason = "n_max reached"
    for n in range(1, n_max + 1):
        # Theta^{n-1}(n_i) on the support. The minimal projections of the join
        # are the nonzero products, and each support point lies under exactly one.
        try:
            idx = N.resolve(q, p)
        except ValueError as exc:
            raise UnsupportedError(f"evolved generators are no longer projections: {exc}") from None
        if code is None:
            _, code = np.unique(idx, return_inverse=True)
        else:
            _, code = np.unique(code * len(N) + idx, return_inverse=True)
        code = code.ravel()
        occupied = int(code.max()) + 1
        if state.size / occupied < min_occupancy:
            reason = f"undersampled at n={n} ({state.size} samples, {occupied} atoms)"
            break
        H.append(entropy_bits(np.bincount(code, weights=state.weights)))
        q, p = endo.points(q, p)
    return rate_from_entropies(H, N.name, depth, "algebraic", state.size, reason, conv_tol)


def algebraic_ks(endo: AlgebraicEndomorphism, state: AlgebraicState, family: PartitionFamily, n_max: int,
                 min_occupancy: float = MIN_OCCUPANCY, conv_tol: float = CONV_TOL,
                 system_name: Optional[str] = None) -> EntropyReport:
    """KS entropy of (A, omega, Theta) as a supremum over finite subalgebras.

    Each family member P gives the subalgebra N generated by its atoms; the
    rate is read from H_omega(N v Theta(N) v ... v Theta^{n-1}(N)).
    """
    rows = []
    for P in family:
        depth = getattr(P, "depth", None)
        try:
            N = FiniteSubalgebra.from_partition(P, state)
            rows.append(_algebraic_row(endo, N, n_max, min_occupancy, conv_tol, depth))
        except StatisticsError as exc:
            rows.append(RateEstimate(P.name, depth, [], [], float("nan"), 0, False, "failed", None, None,
                                     str(exc)))
    settings = {"n_max": n_max, "method": "algebraic", "state": state.name, "min_occupancy": min_occupancy,
                "conv_tol": conv_tol}
    return summarize(system_name or endo.name, rows, settings, conv_tol)


def algebraic_ks_of_system(system: PointMapSystem, family: PartitionFamily, n_max: int,
                           plan: Optional[SamplingPlan] = None, **kw) -> EntropyReport:
    """algebraic_ks with the Koopman endomorphism and plan state of a point-map system."""
    state = AlgebraicState.on_plan(system.domain, plan or SamplingPlan())
    return algebraic_ks(AlgebraicEndomorphism.from_point_map(system), state, family, n_max,
                        system_name=system.name, **kw)


def probe_observables(space: PhaseSpace, count: int = 20) -> list:
    """Deterministic trigonometric test set on a torus: cos and sin of low modes."""
    modes = [(a, b) for s in range(1, 6) for a in range(-s, s + 1) for b in (s - abs(a), abs(a) - s)
             if (a, b) != (0, 0)]
    seen, out = set(), []
    for a, b in modes:
        if (a, b) in seen:
            continue
        seen.add((a, b))
        kq, kp = space.mode_wavevector(a, b)
        out.append(lambda q, p, kq=kq, kp=kp: np.cos(kq * q + kp * p))
        out.append(lambda q, p, kq=kq, kp=kp: np.sin(kq * q + kp * p))
        if len(out) >= count:
            break
    return out[:count]


__all__ = [
    "AlgebraicState", "FiniteSubalgebra", "AlgebraicEndomorphism", "state_of", "subalgebra_entropy",
    "subalgebra_refinement", "algebraic_ks", "algebraic_ks_of_system", "probe_observables",
]
