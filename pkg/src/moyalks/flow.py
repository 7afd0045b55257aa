"""Time evolution of phase-space fields.

Fields are transported as densities: df/dt = {H, f} (Poisson or Moyal), so
at hbar = 0 the solution is f o Phi_{-t}. Two Hamiltonian families are
supported:

* autonomous H (polynomial, Fourier or grid observable);
* kicked systems H = T(p) + V(q) sum_n delta(t - n) on a torus, evolved
  one period at a time as kick followed by free motion.

Classical transport uses backward characteristics and spectral
interpolation. Quantum transport uses the exact mixed-representation
split step for kicked systems and, for autonomous H, exact shears for the
quadratic part combined with RK4 on the Moyal bracket for the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConfigurationError, PhaseSpaceMismatch, StabilityError, UnsupportedError
from .geometry.observable import (Observable, check_resolution, grid_to_modes, interpolate_grid,
                                  nyquist_average, spectral_derivative)
from .geometry.poisson import PointMap
from .geometry.space import PhaseSpace

SCHEMES = ("auto", "semi-lagrangian", "leapfrog", "split-step", "rk4-moyal")
RK4_STABILITY = 2.0  # RK4 is stable on the imaginary axis up to 2.83
MAX_SUBSTEPS = 200_000


# ------------------------------------------------------------------ spec

@dataclass(frozen=True)
class FlowSpec:
    """Dynamics plus discretisation.

    Autonomous flows set `hamiltonian`. Kicked flows set `kinetic` T(p)
    and `kick` V(q); one period is the kick p -> p - V'(q) followed by
    unit-time free motion under T.
    """

    space: PhaseSpace
    hamiltonian: Optional[Observable] = None
    kinetic: Optional[Observable] = None
    kick: Optional[Observable] = None
    hbar: float = 0.0
    scheme: str = "auto"
    dt: float = 1 / 64
    name: str = ""

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.hbar >= 0 and math.isfinite(self.hbar)):
            raise ValueError("hbar must be finite and non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if abs(1 / self.dt - round(1 / self.dt)) > 1e-9 * (1 / self.dt):
            raise ValueError("dt must divide one time unit (1 / dt an integer)")
        if self.kicked:
            if self.hamiltonian is not None:
                raise ValueError("give either a Hamiltonian or a kinetic/kick pair")
            if self.kinetic is None or self.kick is None:
                raise ValueError("kicked flows need both kinetic and kick terms")
            if self.space.kind != "torus":
                raise ValueError("kicked flows are defined on a torus")
            _check_single_variable(self.kick, "q")
            _check_single_variable(self.kinetic, "p")
        elif self.hamiltonian is None:
            raise ValueError("a Hamiltonian is required")
        else:
            if not self.hamiltonian.is_real(1e-12):
                raise ValueError("the Hamiltonian must be real")
            if self.scheme == "leapfrog" and not _separable(self.hamiltonian):
                raise ConfigurationError("leapfrog needs a separable Hamiltonian T(p) + V(q)")

    @property
    def steps_per_unit_time(self) -> int:
        return int(round(1 / self.dt))

    @property
    def kicked(self) -> bool:
        return self.kinetic is not None or self.kick is not None

    def with_hbar(self, hbar: float) -> "FlowSpec":
        return replace(self, hbar=float(hbar))

    @classmethod
    def kicked_rotor(cls, K: float, hbar: float = 0.0, N: int = 128, scheme: str = "auto") -> "FlowSpec":
        """Kicked rotor on the 2 pi torus; its classical time-one map is the standard map."""
        space = PhaseSpace.torus(N=N)
        V = Observable.fourier({(1, 0): K / 2, (-1, 0): K / 2}, space)
        T = Observable.poly({(0, 2): Fraction(1, 2)})
        return cls(space, kinetic=T, kick=V, hbar=float(hbar), scheme=scheme,
                   name=f"kicked-rotor(K={K:g})")

    @classmethod
    def harmonic(cls, omega: float = 1.0, hbar: float = 0.0, L: float = 12.0, N: int = 64,
                 scheme: str = "auto") -> "FlowSpec":
        space = PhaseSpace.plane_window(L, N=N)
        H = Observable.poly({(0, 2): 0.5, (2, 0): 0.5 * omega ** 2})
        return cls(space, hamiltonian=H, hbar=float(hbar), scheme=scheme,
                   name=f"harmonic(omega={omega:g})")


def _check_single_variable(obs: Observable, var: str):
    if obs.kind == "poly":
        bad = [k for k in obs.terms if (k[1] if var == "q" else k[0]) != 0]
    elif obs.kind == "fourier":
        bad = [k for k in obs.modes if (k[1] if var == "q" else k[0]) != 0]
    else:
        raise ValueError("kick and kinetic terms must be polynomial or Fourier")
    if bad:
        raise ValueError(f"term must depend on {var} only")


# ----------------------------------------------------- quadratic Hamiltonians

def quadratic_split(H: Observable):
    """Split a polynomial H into its degree <= 2 part and the rest."""
    if H.kind != "poly":
        return None, H
    low = Observable.poly({k: v for k, v in H.terms.items() if sum(k) <= 2}, H.space)
    high = Observable.poly({k: v for k, v in H.terms.items() if sum(k) > 2}, H.space)
    return low, (None if high.is_zero() else high)


def linear_flow(Hq: Observable, t: float):
    """Exact flow of a quadratic Hamiltonian: x -> M x + c."""
    c = {k: float(v.x) for k, v in Hq.terms.items()}
    S = np.array([[2 * c.get((2, 0), 0.0), c.get((1, 1), 0.0)],
                  [c.get((1, 1), 0.0), 2 * c.get((0, 2), 0.0)]])
    b = np.array([c.get((1, 0), 0.0), c.get((0, 1), 0.0)])
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A = np.zeros((3, 3))
    A[:2, :2] = J @ S
    A[:2, 2] = J @ b
    E = expm(t * A)
    return E[:2, :2], E[:2, 2]


def shear_factors(M: np.ndarray):
    """Factor a unit-determinant matrix into shears.

    Returns a list of ('U', a) for [[1, a], [0, 1]] and ('L', b) for
    [[1, 0], [b, 1]], whose ordered product equals M. Among the valid
    three-shear forms (and four-shear fallbacks) the one with the smallest
    largest coefficient is chosen.
    """
    if abs(np.linalg.det(M) - 1.0) > 1e-9:
        raise ValueError("shear factorisation needs det M = 1")

    def three(M):
        out = []
        m11, m12, m21, m22 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
        if abs(m21) > 1e-12:
            out.append([("U", (m11 - 1) / m21), ("L", m21), ("U", (m22 - 1) / m21)])
        if abs(m12) > 1e-12:
            out.append([("L", (m22 - 1) / m12), ("U", m12), ("L", (m11 - 1) / m12)])
        return out

    if np.allclose(M, np.eye(2), atol=1e-15, rtol=0):
        return []
    cands = three(M)
    for s in (1.0, -1.0):
        # M = (M L(s)) L(-s) and M = (M U(s)) U(-s)
        for f in three(M @ np.array([[1.0, 0.0], [s, 1.0]])):
            cands.append(f + [("L", -s)])
        for f in three(M @ np.array([[1.0, s], [0.0, 1.0]])):
            cands.append(f + [("U", -s)])
    return min(cands, key=lambda fs: (max(abs(x) for _, x in fs), len(fs)))


# ------------------------------------------------------------ grid transport

class GridOps:
    """Spectral shift and multiplier operations on a fixed grid."""

    def __init__(self, space: PhaseSpace):
        self.space = space
        self.q, self.p = space.axes()
        self.kq, self.kp = space.wavenumbers()

    def _row_factor(self, k, N, s):
        # exp(i k s) per (point, mode); Nyquist column becomes cos(k_N s)
        F = np.exp(1j * np.outer(s, k))
        F[:, N // 2] = np.cos(k[N // 2] * s)
        return F

    def shift_p(self, F, s_of_q):
        """g(q, p) = F(q, p + s(q))."""
        s = np.broadcast_to(np.asarray(s_of_q, dtype=float), (self.space.Nq,))
        fac = self._row_factor(self.kp, self.space.Np, s)
        return self._finish(np.fft.ifft(np.fft.fft(F, axis=1) * fac, axis=1), F)

    def shift_q(self, F, s_of_p):
        """g(q, p) = F(q + s(p), p)."""
        s = np.broadcast_to(np.asarray(s_of_p, dtype=float), (self.space.Np,))
        fac = self._row_factor(self.kq, self.space.Nq, s).T
        return self._finish(np.fft.ifft(np.fft.fft(F, axis=0) * fac, axis=0), F)

    def shift(self, F, sq, sp):
        """g(x) = F(x + s) for a constant vector s."""
        mq = nyquist_average(lambda k: np.exp(1j * k * sq), self.kq, self.space.Nq)
        mp = nyquist_average(lambda k: np.exp(1j * k * sp), self.kp, self.space.Np)
        return self._finish(np.fft.ifft2(np.fft.fft2(F) * mq[:, None] * mp[None, :]), F)

    def p_mode_multiplier(self, F, fac):
        """Multiply the p-Fourier coefficients of each row by fac[q_index, p_mode]."""
        return np.fft.ifft(np.fft.fft(F, axis=1) * fac, axis=1)

    def q_mode_multiplier(self, F, fac):
        """Multiply the q-Fourier coefficients of each column by fac[q_mode, p_index]."""
        return np.fft.ifft(np.fft.fft(F, axis=0) * fac, axis=0)

    @staticmethod
    def _finish(out, like):
        return out.real if np.isrealobj(like) else out

    def affine_pullback(self, F, M, c):
        """F o A^{-1} for A(x) = M x + c, through exact shears."""
        out = F
        for kind, a in reversed(shear_factors(M)):
            if kind == "U":
                out = self.shift_q(out, -a * self.p)
            else:
                out = self.shift_p(out, -a * self.q)
        if c[0] != 0 or c[1] != 0:
            out = self.shift(out, -c[0], -c[1])
        return out


MAX_SHEAR = 0.5


def quadratic_pullback(ops: GridOps, low: Observable, t: float, F):
    """Transport under a quadratic Hamiltonian in slices with small shears.

    Large shears wrap content across the periodic grid, so the time-t map
    is split into equal slices whose shear coefficients stay below MAX_SHEAR.
    """
    n = 1
    while n < 4096:
        M, c = linear_flow(low, t / n)
        fac = shear_factors(M)
        if not fac or max(abs(a) for _, a in fac) <= MAX_SHEAR:
            break
        n *= 2
    out = F
    for _ in range(n):
        out = ops.affine_pullback(out, M, c)
    return out


# ------------------------------------------------------------- point flows

def _poly_or_fourier_grad(obs: Observable):
    dq, dp = obs.derivative(1, 0), obs.derivative(0, 1)

    def grad(q, p):
        return np.real(dq.evaluate(q, p)), np.real(dp.evaluate(q, p))

    return grad


def _separable(H: Observable):
    if H.kind == "poly":
        return all(i == 0 or j == 0 for i, j in H.terms)
    if H.kind == "fourier":
        return all(a == 0 or b == 0 for a, b in H.modes)
    return False


def _integrate(H: Observable, q, p, t: float, dt: float, scheme: str):
    """Integrate Hamilton's equations for time t (negative t runs backwards)."""
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    if t == 0:
        return q, p
    n = max(1, int(math.ceil(abs(t) / dt - 1e-12)))
    h = t / n
    grad = _poly_or_fourier_grad(H)
    if scheme == "leapfrog" or (scheme == "auto" and _separable(H)):
        if not _separable(H):
            raise ConfigurationError("leapfrog needs a separable Hamiltonian T(p) + V(q)")
        for _ in range(n):
            Hq, _ = grad(q, p)
            p = p - 0.5 * h * Hq
            _, Hp = grad(q, p)
            q = q + h * Hp
            Hq, _ = grad(q, p)
            p = p - 0.5 * h * Hq
        return q, p

    def rhs(q, p):
        Hq, Hp = grad(q, p)
        return Hp, -Hq

    for _ in range(n):
        k1 = rhs(q, p)
        k2 = rhs(q + 0.5 * h * k1[0], p + 0.5 * h * k1[1])
        k3 = rhs(q + 0.5 * h * k2[0], p + 0.5 * h * k2[1])
        k4 = rhs(q + h * k3[0], p + h * k3[1])
        q = q + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return q, p


def flow_map(spec: FlowSpec, t: float = 1.0, wrap: bool = True) -> PointMap:
    """Classical point map Phi_t of the flow (integer t for kicked flows)."""
    space = spec.space
    if spec.kicked:
        n = int(round(t))
        if abs(n - t) > 1e-12:
            raise UnsupportedError("kicked flows are sampled at integer times")
        dV = _poly_or_fourier_grad(spec.kick)
        dT = _poly_or_fourier_grad(spec.kinetic)
        d2V = spec.kick.derivative(2, 0)
        d2T = spec.kinetic.derivative(0, 2)

        def one(q, p):
            p = p - dV(q, p)[0]
            q = q + dT(q, p)[1]
            return q, p

        def one_back(q, p):
            q = q - dT(q, p)[1]
            p = p + dV(q, p)[0]
            return q, p

        def run(q, p, steps, fn):
            q = np.asarray(q, dtype=float)
            p = np.asarray(p, dtype=float)
            for _ in range(steps):
                q, p = fn(q, p)
                if wrap:
                    q, p = space.wrap(q, p)
            return q, p

        fwd = (lambda q, p: run(q, p, n, one)) if n >= 0 else (lambda q, p: run(q, p, -n, one_back))
        inv = (lambda q, p: run(q, p, n, one_back)) if n >= 0 else (lambda q, p: run(q, p, -n, one))
        jac = None
        if n == 1:
            def jac(q, p):
                vpp = np.real(d2V.evaluate(q, p))
                p1 = p - dV(q, p)[0]
                tpp = np.real(d2T.evaluate(q, p1))
                # p' = p - V'(q), q' = q + T'(p')
                dp_dq, dp_dp = -vpp, np.ones_like(vpp)
                return 1 + tpp * dp_dq, tpp * dp_dp, dp_dq, dp_dp
        return PointMap(fwd, inv, jac, name=f"{spec.name or 'kicked'} t={n}")

    H = spec.hamiltonian
    low, high = quadratic_split(H)
    if high is None and low is not None:
        M, c = linear_flow(low, t)
        Mi, ci = linear_flow(low, -t)

        def lin(M, c):
            def fn(q, p):
                q = np.asarray(q, dtype=float)
                p = np.asarray(p, dtype=float)
                qq = M[0, 0] * q + M[0, 1] * p + c[0]
                pp = M[1, 0] * q + M[1, 1] * p + c[1]
                return space.wrap(qq, pp) if (wrap and space.kind == "torus") else (qq, pp)
            return fn

        def jac(q, p):
            one = np.ones(np.broadcast(np.asarray(q), np.asarray(p)).shape)
            return M[0, 0] * one, M[0, 1] * one, M[1, 0] * one, M[1, 1] * one

        return PointMap(lin(M, c), lin(Mi, ci), jac, name=f"{spec.name or 'linear'} t={t:g}")

    scheme = spec.scheme if spec.scheme in ("leapfrog",) else "auto"

    def fwd(q, p):
        qq, pp = _integrate(H, q, p, t, spec.dt, scheme)
        return space.wrap(qq, pp) if (wrap and space.kind == "torus") else (qq, pp)

    def inv(q, p):
        qq, pp = _integrate(H, q, p, -t, spec.dt, scheme)
        return space.wrap(qq, pp) if (wrap and space.kind == "torus") else (qq, pp)

    return PointMap(fwd, inv, None, name=f"{spec.name or 'flow'} t={t:g}")


def is_point_flow(spec: FlowSpec) -> bool:
    """True when the quantum evolution transports fields along classical points."""
    if spec.hbar == 0:
        return True
    if spec.kicked:
        return _degree(spec.kick) <= 2 and _degree(spec.kinetic) <= 2
    return _degree(spec.hamiltonian) <= 2


def _degree(obs: Observable) -> float:
    if obs.kind == "poly":
        return obs.degree
    if obs.kind == "fourier" and set(obs.modes) <= {(0, 0)}:
        return 0
    return math.inf


# ------------------------------------------------------------ evolved fields

@dataclass
class EvolvedField:
    field: Observable
    t: float
    hbar: float
    scheme: str
    steps: int = 0
    dt_used: Optional[float] = None
    negativity_mass: Optional[float] = None
    mean_drift: float = 0.0
    norm_drift: float = 0.0
    notes: tuple = ()

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def negativity_mass(values: np.ndarray) -> float:
    v = np.real(values)
    tot = np.abs(v).sum()
    return float(np.clip(-v, 0, None).sum() / tot) if tot > 0 else 0.0


def _as_grid(f, space: PhaseSpace) -> np.ndarray:
    if isinstance(f, Observable):
        if f.kind == "grid" and f.space != space:
            raise PhaseSpaceMismatch("field and flow live on different phase spaces")
        vals = f.on_grid(space)
    else:
        vals = np.asarray(f)
        if vals.shape != space.shape:
            raise PhaseSpaceMismatch(f"field shape {vals.shape} does not match grid {space.shape}")
    if np.iscomplexobj(vals) and not np.any(vals.imag):
        vals = vals.real
    return vals


def _wrap_result(vals0, vals, spec, t, scheme, steps=0, dt_used=None, notes=()):
    nonneg = np.isrealobj(vals0) and vals0.min() >= -1e-12 * max(1.0, np.abs(vals0).max())
    if np.iscomplexobj(vals) and np.isrealobj(vals0):
        vals = vals.real
    m0, m1 = np.mean(vals0), np.mean(vals)
    n0, n1 = np.linalg.norm(vals0), np.linalg.norm(vals)
    return EvolvedField(
        Observable.grid(vals, spec.space), float(t), spec.hbar, scheme, steps, dt_used,
        negativity_mass(vals) if nonneg else None,
        float(abs(m1 - m0)), float(abs(n1 - n0) / n0) if n0 > 0 else 0.0, tuple(notes))


def liouville_step(f, spec: FlowSpec, t: float = 1.0) -> EvolvedField:
    """Classical transport f -> f o Phi_{-t}."""
    space = spec.space
    vals0 = _as_grid(f, space)
    if spec.kicked:
        return _wrap_result(vals0, TimeOneMap(spec.with_hbar(0.0)).apply_power(vals0, _int_time(t)),
                            spec, t, "split-step", _int_time(t))
    low, high = quadratic_split(spec.hamiltonian)
    if high is None and low is not None:
        M, c = linear_flow(low, -t)
        Q, P = space.grid()
        qb = M[0, 0] * Q + M[0, 1] * P + c[0]
        pb = M[1, 0] * Q + M[1, 1] * P + c[1]
        vals = _interp_feet(vals0, space, qb, pb)
        return _wrap_result(vals0, vals, spec, t, "semi-lagrangian", 1)
    back = flow_map(spec, -t, wrap=False)
    Q, P = space.grid()
    qb, pb = back(Q, P)
    vals = _interp_feet(vals0, space, qb, pb)
    n = max(1, int(math.ceil(abs(t) / spec.dt - 1e-12)))
    scheme = "leapfrog" if _separable(spec.hamiltonian) else "semi-lagrangian"
    return _wrap_result(vals0, vals, spec, t, scheme, n, abs(t) / n)


def _interp_feet(vals, space: PhaseSpace, qb, pb):
    """Field values at characteristic feet; a plane window is zero-extended."""
    if space.kind == "torus":
        return interpolate_grid(vals, space, *space.wrap(qb, pb))
    q0, p0 = space.origin
    inside = (qb >= q0) & (qb < q0 + space.Lq) & (pb >= p0) & (pb < p0 + space.Lp)
    out = np.zeros(qb.shape, dtype=vals.dtype)
    out[inside] = interpolate_grid(vals, space, qb[inside], pb[inside])
    return out


def _int_time(t) -> int:
    n = int(round(t))
    if abs(n - t) > 1e-12 or n < 0:
        raise UnsupportedError("kicked flows advance by whole, non-negative periods")
    return n


# ---------------------------------------------------- Moyal generators (grid)

class MoyalGenerator:
    """Grid action F -> {R, F}_hbar and a bound on its spectral radius."""

    def __init__(self, R: Observable, space: PhaseSpace, hbar: float):
        self.space, self.hbar = space, hbar
        self.ops = GridOps(space)
        kmax = math.hypot(np.abs(self.ops.kq).max(), np.abs(self.ops.kp).max())
        if R.kind == "grid":
            check_resolution(R.values, what="Hamiltonian")
            R = Observable.fourier(grid_to_modes(R.values, space, cutoff=1e-14), space)
        self.R = R
        if R.kind == "fourier":
            self.terms = []
            bound = 0.0
            Q, P = space.grid()
            for (a, b), c in R.modes.items():
                if (a, b) == (0, 0):
                    continue
                kq, kp = space.mode_wavevector(a, b)
                sq, sp = 0.5 * hbar * kp, -0.5 * hbar * kq
                wave = c * np.exp(1j * (kq * Q + kp * P))
                self.terms.append((wave, sq, sp))
                bound += abs(c) * min(2.0 / hbar, math.hypot(kq, kp) * kmax)
            self.bound = bound
        else:
            self.order = R.degree
            self.derivs = {}
            Q, P = space.grid()
            bound = 0.0
            for n in range(1, self.order + 1, 2):
                for k in range(n + 1):
                    d = R.derivative(n - k, k)
                    if d.is_zero():
                        continue
                    vals = d.on_grid(space)
                    self.derivs[(n, k)] = vals
                    kq_max, kp_max = np.abs(self.ops.kq).max(), np.abs(self.ops.kp).max()
                    bound += (0.5 * hbar) ** (n - 1) / math.factorial(n) * 2 * math.comb(n, k) \
                        * np.abs(vals).max() * kq_max ** k * kp_max ** (n - k)
            self.bound = bound

    def __call__(self, F):
        if self.R.kind == "fourier":
            out = np.zeros(self.space.shape, dtype=complex)
            for wave, sq, sp in self.terms:
                out += wave * (self.ops.shift(F, sq, sp) - self.ops.shift(F, -sq, -sp))
            return out / (1j * self.hbar)
        # {R, F} odd series with spectral derivatives of F
        out = np.zeros(self.space.shape, dtype=complex)
        for (n, k), dR in self.derivs.items():
            dF = spectral_derivative(F, self.space, k, n - k)
            out += ((0.5j * self.hbar) ** n / math.factorial(n)) * math.comb(n, k) * (-1) ** k * dR * dF
        return out * (2.0 / (1j * self.hbar))


def _rk4(F, L, t, dt):
    """Integrate dF/dt = L F over time t with at most dt per step."""
    n = max(1, int(math.ceil(abs(t) / dt - 1e-12)))
    h = t / n
    for _ in range(n):
        k1 = L(F)
        k2 = L(F + 0.5 * h * k1)
        k3 = L(F + 0.5 * h * k2)
        k4 = L(F + h * k3)
        F = F + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return F, n, h


def _stable_dt(gen: MoyalGenerator, dt: float, span: float) -> float:
    d = dt
    while gen.bound * d > RK4_STABILITY:
        d *= 0.5
        if span / d > MAX_SUBSTEPS:
            raise StabilityError(
                f"mode-coupling bound {gen.bound:.3g} needs more than {MAX_SUBSTEPS} substeps "
                f"over time {span:g}; refine hbar or reduce the grid")
    return d


class TimeOneMap:
    """Reusable one-period propagator with cached multipliers."""

    def __init__(self, spec: FlowSpec):
        self.spec = spec
        self.space = spec.space
        self.ops = GridOps(spec.space)
        self._kick_fac = None
        self._free_fac = None
        self._gen = None
        self.scheme = spec.scheme
        if spec.kicked and self.scheme == "auto":
            self.scheme = "split-step"
        if not spec.kicked and self.scheme == "auto":
            self.scheme = "semi-lagrangian" if spec.hbar == 0 else "rk4-moyal"
        self.substeps = 0
        self.dt_used = None

    # kicked dynamics

    def _kick_factor(self):
        if self._kick_fac is None:
            h = self.spec.hbar
            q = self.ops.q
            V = self.spec.kick
            kp = self.ops.kp
            if h == 0:
                dV = np.real(V.derivative(1, 0).evaluate(q, np.zeros_like(q)))
                fn = lambda k: np.exp(1j * np.outer(dV, k))  # noqa: E731
            else:
                def fn(k):
                    k = np.atleast_1d(k)
                    Qm = q[:, None] - 0.5 * h * k[None, :]
                    Qp = q[:, None] + 0.5 * h * k[None, :]
                    z = np.zeros_like(Qm)
                    dv = np.real(V.evaluate(Qm, z)) - np.real(V.evaluate(Qp, z))
                    return np.exp(dv / (1j * h))
            self._kick_fac = _nyquist_columns(fn, kp, self.space.Np)
        return self._kick_fac

    def _free_factor(self):
        if self._free_fac is None:
            h = self.spec.hbar
            p = self.ops.p
            T = self.spec.kinetic
            kq = self.ops.kq
            if h == 0 or _degree(T) <= 2:
                dT = np.real(T.derivative(0, 1).evaluate(np.zeros_like(p), p))
                fn = lambda k: np.exp(-1j * np.outer(dT, k))  # noqa: E731
            else:
                def fn(k):
                    k = np.atleast_1d(k)
                    Pp = p[:, None] + 0.5 * h * k[None, :]
                    Pm = p[:, None] - 0.5 * h * k[None, :]
                    z = np.zeros_like(Pp)
                    dt_ = np.real(T.evaluate(z, Pp)) - np.real(T.evaluate(z, Pm))
                    return np.exp(dt_ / (1j * h))
            self._free_fac = _nyquist_columns(fn, kq, self.space.Nq).T
        return self._free_fac

    def _kick_rk4(self, F):
        if self._gen is None:
            self._gen = MoyalGenerator(self.spec.kick, self.space, self.spec.hbar)
            self.dt_used = _stable_dt(self._gen, self.spec.dt, 1.0)
        out, n, _ = _rk4(F.astype(complex), self._gen, 1.0, self.dt_used)
        self.substeps += n
        return out

    def _period(self, F):
        if self.scheme == "rk4-moyal" and self.spec.hbar > 0:
            G = self._kick_rk4(F)
        else:
            G = self.ops.p_mode_multiplier(F, self._kick_factor())
        return self.ops.q_mode_multiplier(G, self._free_factor())

    # autonomous dynamics

    def _autonomous(self, F, t):
        spec = self.spec
        low, high = quadratic_split(spec.hamiltonian)
        if high is None and low is not None:
            return quadratic_pullback(self.ops, low, t, F)
        if self._gen is None:
            self._gen = MoyalGenerator(high, self.space, spec.hbar)
            self.dt_used = _stable_dt(self._gen, spec.dt, abs(t))
        n = max(1, int(math.ceil(abs(t) / self.dt_used - 1e-12)))
        h = t / n
        half = linear_flow(low, 0.5 * h) if low is not None and not low.is_zero() else None
        G = F.astype(complex)
        for _ in range(n):
            if half is not None:
                G = self.ops.affine_pullback(G, *half)
            G, _, _ = _rk4(G, self._gen, h, abs(h))
            if half is not None:
                G = self.ops.affine_pullback(G, *half)
        self.substeps += n
        return G

    def apply_values(self, F):
        if self.spec.kicked:
            out = self._period(F)
        elif self.spec.hbar == 0:
            return liouville_step(F, self.spec, 1.0).values
        else:
            out = self._autonomous(F, 1.0)
        return out.real if np.isrealobj(F) else out

    def apply_power(self, F, n: int):
        out = F
        for _ in range(n):
            out = self.apply_values(out)
        return out

    def __call__(self, f) -> EvolvedField:
        vals0 = _as_grid(f, self.space)
        return _wrap_result(vals0, self.apply_values(vals0), self.spec, 1.0, self.scheme,
                            self.substeps, self.dt_used)

    def power(self, f, n: int) -> EvolvedField:
        vals0 = _as_grid(f, self.space)
        return _wrap_result(vals0, self.apply_power(vals0, int(n)), self.spec, n, self.scheme,
                            self.substeps, self.dt_used)

    def point_map(self) -> PointMap:
        """Classical time-one point map of the same dynamics."""
        return flow_map(self.spec, 1.0)


def _nyquist_columns(fn, k, N):
    """Matrix fn(k) over modes, Nyquist column averaged over +/-k_N."""
    vals = np.array(fn(k), dtype=complex)
    kn = k[N // 2]
    vals[:, N // 2] = 0.5 * (fn(np.array([kn]))[:, 0] + fn(np.array([-kn]))[:, 0])
    return vals


def time_one_map(spec: FlowSpec) -> TimeOneMap:
    return TimeOneMap(spec)


def moyal_step(f, spec: FlowSpec, t: float = 1.0) -> EvolvedField:
    """Quantum transport df/dt = {H, f}_hbar; hbar = 0 routes to liouville_step."""
    if spec.hbar == 0:
        return liouville_step(f, spec, t)
    vals0 = _as_grid(f, spec.space)
    prop = TimeOneMap(spec)
    if spec.kicked:
        vals = prop.apply_power(vals0, _int_time(t))
    else:
        vals = prop._autonomous(vals0, float(t))
        vals = vals.real if np.isrealobj(vals0) else vals
    return _wrap_result(vals0, vals, spec, t, prop.scheme, prop.substeps, prop.dt_used)


# ------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class InvarianceReport:
    max_deviation: float
    times: tuple
    deviations: tuple


def state_invariance_check(spec: FlowSpec, f, t_max: int = 10) -> InvarianceReport:
    """|omega(U_t f) - omega(f)| for t = 1..t_max, omega the normalized Liouville state."""
    vals0 = _as_grid(f, spec.space)
    prop = TimeOneMap(spec)
    base = np.mean(vals0)
    devs = []
    cur = vals0
    for _ in range(int(t_max)):
        cur = prop.apply_values(cur)
        devs.append(float(abs(np.mean(cur) - base)))
    return InvarianceReport(max(devs) if devs else 0.0, tuple(range(1, int(t_max) + 1)), tuple(devs))


__all__ = [
    "FlowSpec", "EvolvedField", "TimeOneMap", "time_one_map", "liouville_step", "moyal_step",
    "flow_map", "state_invariance_check", "InvarianceReport", "GridOps", "shear_factors",
    "linear_flow", "is_point_flow", "negativity_mass", "MoyalGenerator",
]
