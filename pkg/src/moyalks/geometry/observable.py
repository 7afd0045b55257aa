"""Smooth observables on phase space in three representations.

* ``poly``: finite sum of monomials q^i p^j with exact Gaussian-rational
  coefficients (sympy's QQ_I domain, gmpy2 backed).
* ``fourier``: sparse sum of plane waves exp(i(k_q q + k_p p)) with complex
  float coefficients, keyed by integer mode indices (a, b) so that
  k_q = 2 pi a / Lq and k_p = 2 pi b / Lp.
* ``grid``: samples on the uniform grid of a PhaseSpace, read as the real
  trigonometric interpolant (Nyquist modes split evenly between +/-).
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import Optional

import numpy as np
import sympy
from sympy.polys.domains import QQ, QQ_I

from ..errors import PhaseSpaceMismatch, ResolutionError
from .space import PhaseSpace

ZERO = QQ_I.zero
RESOLUTION_TOL = 1e-12

Q_SYM, P_SYM = sympy.symbols("q p", real=True)


# ---------------------------------------------------------------- coefficients

def exact(x):
    """Convert a scalar to an exact Gaussian rational.

    Floats are read through their shortest decimal repr, so 0.2 becomes 1/5.
    """
    if isinstance(x, QQ_I.dtype):
        return x
    if isinstance(x, (bool, int, np.integer)):
        return QQ_I(int(x), 0)
    if isinstance(x, Fraction):
        return QQ_I(QQ(x.numerator, x.denominator), 0)
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise ValueError("coefficients must be finite")
        f = Fraction(repr(float(x)))
        return QQ_I(QQ(f.numerator, f.denominator), 0)
    if isinstance(x, (complex, np.complexfloating)):
        re, im = exact(float(x.real)), exact(float(x.imag))
        return QQ_I(re.x, im.x)
    if isinstance(x, sympy.Basic):
        return QQ_I.from_sympy(sympy.nsimplify(x) if x.is_Float else x)
    try:
        return QQ_I.convert(x)
    except Exception:
        raise TypeError(f"cannot interpret {x!r} as an exact coefficient") from None


def to_complex(c) -> complex:
    return complex(float(c.x), float(c.y))


def format_rational(r) -> str:
    f = Fraction(int(r.numerator), int(r.denominator))
    if f.denominator == 1:
        return str(f.numerator)
    d = f.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        # terminating decimal
        digits = 0
        scaled = f
        while scaled.denominator != 1:
            scaled *= 10
            digits += 1
        s = f"{abs(scaled.numerator):0{digits + 1}d}"
        out = s[:-digits] + "." + s[-digits:]
        return ("-" if f < 0 else "") + out
    return f"{f.numerator}/{f.denominator}"


def format_coefficient(c) -> str:
    re, im = c.x, c.y
    if im == 0:
        return format_rational(re)
    if re == 0:
        return format_rational(im) + "*i"
    return f"({format_rational(re)} + {format_rational(im)}*i)".replace("+ -", "- ")


# ----------------------------------------------------------------- grid helpers

def nyquist_average(fn, k, N):
    """Evaluate a per-mode multiplier with the Nyquist entry averaged over +/-k_N."""
    vals = np.asarray(fn(k), dtype=complex)
    if vals.ndim == 0:
        vals = np.full(k.shape, vals)
    vals = vals.copy()
    kn = k[N // 2]
    vals[..., N // 2] = 0.5 * (np.asarray(fn(np.array([kn])))[..., 0]
                               + np.asarray(fn(np.array([-kn])))[..., 0])
    return vals


def spectral_derivative(values: np.ndarray, space: PhaseSpace, nq: int, np_: int) -> np.ndarray:
    if nq == 0 and np_ == 0:
        return values
    kq, kp = space.wavenumbers()
    mq = nyquist_average(lambda k: (1j * k) ** nq, kq, space.Nq)
    mp = nyquist_average(lambda k: (1j * k) ** np_, kp, space.Np)
    out = np.fft.ifft2(np.fft.fft2(values) * mq[:, None] * mp[None, :])
    return out.real if np.isrealobj(values) else out


def top_mode_fraction(values: np.ndarray) -> float:
    """Share of spectral energy in the two outermost mode rings."""
    c = np.fft.fft2(values)
    e = np.abs(c) ** 2
    total = e.sum()
    if total == 0:
        return 0.0
    Nq, Np = values.shape
    aq = np.abs(np.fft.fftfreq(Nq, 1.0 / Nq))
    ap = np.abs(np.fft.fftfreq(Np, 1.0 / Np))
    ring = (aq[:, None] >= Nq // 2 - 1) | (ap[None, :] >= Np // 2 - 1)
    return float(e[ring].sum() / total)


def check_resolution(values: np.ndarray, tol: float = RESOLUTION_TOL, what: str = "field"):
    frac = top_mode_fraction(values)
    if frac > tol:
        raise ResolutionError(
            f"{what} is under-resolved: top-mode energy fraction {frac:.3g} exceeds {tol:g}")


def grid_to_modes(values: np.ndarray, space: PhaseSpace, cutoff: float = 0.0) -> dict:
    """Exact plane-wave expansion of the trigonometric interpolant of grid data."""
    Nq, Np = values.shape
    c = np.fft.fft2(values) / (Nq * Np)
    q0, p0 = space.origin
    ia = np.fft.fftfreq(Nq, 1.0 / Nq).astype(int)
    ib = np.fft.fftfreq(Np, 1.0 / Np).astype(int)
    thresh = cutoff * np.abs(c).max() if c.size else 0.0
    modes: dict = {}
    A, B = np.nonzero(np.abs(c) > thresh)
    for i, j in zip(A.tolist(), B.tolist()):
        # a Nyquist index stands for a cosine, i.e. half weight on each of +/-N/2
        a_opts = (Nq // 2, -Nq // 2) if i == Nq // 2 else (int(ia[i]),)
        b_opts = (Np // 2, -Np // 2) if j == Np // 2 else (int(ib[j]),)
        w = c[i, j] / (len(a_opts) * len(b_opts))
        for a in a_opts:
            for b in b_opts:
                kq, kp = space.mode_wavevector(a, b)
                modes[(a, b)] = modes.get((a, b), 0) + complex(w * np.exp(-1j * (kq * q0 + kp * p0)))
    return modes


def eval_modes(modes: dict, q, p, space: PhaseSpace, chunk: int = 4096) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast(q, p).shape
    qf = np.broadcast_to(q, shape).ravel()
    pf = np.broadcast_to(p, shape).ravel()
    if not modes:
        return np.zeros(shape, dtype=complex)
    keys = np.array(list(modes.keys()), dtype=float)
    coef = np.array(list(modes.values()), dtype=complex)
    kq = 2 * np.pi * keys[:, 0] / space.Lq
    kp = 2 * np.pi * keys[:, 1] / space.Lp
    out = np.empty(qf.size, dtype=complex)
    for s in range(0, qf.size, chunk):
        ph = np.outer(qf[s:s + chunk], kq) + np.outer(pf[s:s + chunk], kp)
        out[s:s + chunk] = np.exp(1j * ph) @ coef
    return out.reshape(shape)


def interpolate_grid(values: np.ndarray, space: PhaseSpace, q, p) -> np.ndarray:
    """Evaluate the trigonometric interpolant of grid data at arbitrary points.

    Uses the separable form E_q C E_p^T, where each basis row carries the
    Nyquist mode as a cosine.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast(q, p).shape
    qf = np.broadcast_to(q, shape).ravel()
    pf = np.broadcast_to(p, shape).ravel()
    Nq, Np = values.shape
    q0, p0 = space.origin
    C = np.fft.fft2(values) / (Nq * Np)
    kq, kp = space.wavenumbers()
    out = np.empty(qf.size, dtype=complex)
    chunk = max(1, 2 ** 22 // (Nq * Np))
    for s in range(0, qf.size, chunk):
        u = qf[s:s + chunk] - q0
        v = pf[s:s + chunk] - p0
        Eq = np.exp(1j * np.outer(u, kq))
        Eq[:, Nq // 2] = np.cos(kq[Nq // 2] * u)
        Ep = np.exp(1j * np.outer(v, kp))
        Ep[:, Np // 2] = np.cos(kp[Np // 2] * v)
        out[s:s + chunk] = np.sum((Eq @ C) * Ep, axis=1)
    out = out.reshape(shape)
    return out.real if np.isrealobj(values) else out


# ------------------------------------------------------------------ Observable

class Observable:
    """A phase-space function with an explicit representation tag."""

    __slots__ = ("kind", "space", "terms", "modes", "values")

    def __init__(self, kind, space=None, terms=None, modes=None, values=None):
        if kind not in ("poly", "fourier", "grid"):
            raise ValueError(f"unknown representation {kind!r}")
        self.kind = kind
        self.space = space
        self.terms = terms
        self.modes = modes
        self.values = values
        if kind != "poly" and space is None:
            raise ValueError(f"{kind} observables need a phase space")

    # constructors

    @classmethod
    def poly(cls, terms, space: Optional[PhaseSpace] = None) -> "Observable":
        """From a mapping {(i, j): coefficient} for the monomial q^i p^j."""
        clean = {}
        for key, c in dict(terms).items():
            i, j = (int(key[0]), int(key[1]))
            if i < 0 or j < 0:
                raise ValueError("monomial powers must be non-negative")
            e = exact(c)
            if e != ZERO:
                clean[(i, j)] = clean.get((i, j), ZERO) + e
                if clean[(i, j)] == ZERO:
                    del clean[(i, j)]
        return cls("poly", space, terms=clean)

    @classmethod
    def fourier(cls, modes, space: PhaseSpace) -> "Observable":
        """From a mapping {(a, b): complex} for exp(2 pi i (a q / Lq + b p / Lp))."""
        clean = {}
        for key, c in dict(modes).items():
            k = (int(key[0]), int(key[1]))
            v = complex(c)
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError("mode coefficients must be finite")
            if v != 0:
                clean[k] = clean.get(k, 0) + v
        return cls("fourier", space, modes=clean)

    @classmethod
    def grid(cls, values, space: PhaseSpace) -> "Observable":
        arr = np.asarray(values)
        if arr.shape != space.shape:
            raise PhaseSpaceMismatch(f"grid shape {arr.shape} does not match space {space.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        if np.iscomplexobj(arr) and np.all(arr.imag == 0):
            arr = arr.real
        return cls("grid", space, values=arr.astype(complex if np.iscomplexobj(arr) else float))

    @classmethod
    def constant(cls, c, space=None):
        return cls.poly({(0, 0): c}, space)

    @classmethod
    def q(cls, space=None):
        return cls.poly({(1, 0): 1}, space)

    @classmethod
    def p(cls, space=None):
        return cls.poly({(0, 1): 1}, space)

    @classmethod
    def from_function(cls, fn, space: PhaseSpace) -> "Observable":
        Q, P = space.grid()
        return cls.grid(fn(Q, P), space)

    @classmethod
    def parse(cls, text: str, space: Optional[PhaseSpace] = None) -> "Observable":
        """Parse expressions like 'q^3', '2*q*p - 1/2' or 'cos(q) + sin(2*p)'."""
        return cls.from_sympy(_parse_expression(text), space)

    @classmethod
    def parse_grid(cls, text: str, space: PhaseSpace) -> "Observable":
        """Sample any expression in q, p (e.g. 'exp(-q^2 - p^2)') on the grid of `space`."""
        expr = _parse_expression(text)
        extra = {s.name for s in expr.free_symbols} - {"q", "p"}
        if extra:
            raise ValueError(f"unknown symbols {sorted(extra)}")
        fn = sympy.lambdify((Q_SYM, P_SYM), expr, "numpy")
        Q, P = space.grid()
        vals = np.broadcast_to(np.asarray(fn(Q, P)), Q.shape).copy()
        if np.iscomplexobj(vals) and not np.any(vals.imag):
            vals = vals.real
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{text!r} is not finite on the grid")
        return cls.grid(vals, space)

    @classmethod
    def from_sympy(cls, expr, space: Optional[PhaseSpace] = None) -> "Observable":
        expr = sympy.sympify(expr)
        extra = expr.free_symbols - {Q_SYM, P_SYM}
        if extra:
            # accept plain Symbol('q') / Symbol('p') as well
            subs = {s: (Q_SYM if s.name == "q" else P_SYM) for s in extra if s.name in ("q", "p")}
            expr = expr.subs(subs)
            extra = expr.free_symbols - {Q_SYM, P_SYM}
            if extra:
                raise ValueError(f"unknown symbols {sorted(map(str, extra))}")
        expr = sympy.nsimplify(expr, rational=True) if expr.has(sympy.Float) else expr
        if expr.is_polynomial(Q_SYM, P_SYM):
            poly = sympy.Poly(sympy.expand(expr), Q_SYM, P_SYM)
            return cls.poly({m: QQ_I.from_sympy(c) for m, c in poly.terms()}, space)
        if space is None:
            space = PhaseSpace.torus()
        return cls.fourier(_trig_modes(expr, space), space)

    # basic properties

    def _require_space(self):
        if self.space is None:
            raise PhaseSpaceMismatch("a polynomial without a phase space cannot be gridded")
        return self.space

    @property
    def degree(self) -> int:
        if self.kind != "poly":
            raise TypeError("degree is defined for polynomial observables")
        return max((i + j for i, j in self.terms), default=-1)

    def is_zero(self) -> bool:
        if self.kind == "poly":
            return not self.terms
        if self.kind == "fourier":
            return all(v == 0 for v in self.modes.values())
        return not np.any(self.values)

    def is_real(self, tol: float = 0.0) -> bool:
        if self.kind == "poly":
            return all(c.y == 0 for c in self.terms.values())
        if self.kind == "fourier":
            for (a, b), v in self.modes.items():
                w = self.modes.get((-a, -b), 0)
                if abs(v - np.conj(w)) > tol * max(1.0, abs(v)):
                    return False
            return True
        return np.isrealobj(self.values) or bool(np.all(np.abs(self.values.imag) <= tol))

    def with_space(self, space: PhaseSpace) -> "Observable":
        if self.kind != "poly":
            raise PhaseSpaceMismatch("only polynomials can be re-homed to another space")
        return Observable("poly", space, terms=dict(self.terms))

    # evaluation

    def evaluate(self, q, p) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.kind == "poly":
            out = np.zeros(np.broadcast(q, p).shape, dtype=complex)
            for (i, j), c in self.terms.items():
                out = out + to_complex(c) * q ** i * p ** j
            return out.real if self.is_real() else out
        if self.kind == "fourier":
            out = eval_modes(self.modes, q, p, self.space)
            return out.real if self.is_real(1e-15) else out
        return interpolate_grid(self.values, self.space, q, p)

    __call__ = evaluate

    def on_grid(self, space: Optional[PhaseSpace] = None) -> np.ndarray:
        space = space or self._require_space()
        if self.kind == "grid":
            if space != self.space:
                raise PhaseSpaceMismatch("grid observable lives on a different space")
            return self.values
        Q, P = space.grid()
        return self.evaluate(Q, P)

    def to_grid(self, space: Optional[PhaseSpace] = None) -> "Observable":
        space = space or self._require_space()
        return Observable.grid(self.on_grid(space), space)

    def to_fourier(self, cutoff: float = 0.0) -> "Observable":
        if self.kind == "fourier":
            return self
        if self.kind == "poly":
            if self.degree > 0:
                raise TypeError("non-constant polynomials have no plane-wave expansion")
            c = to_complex(self.terms.get((0, 0), ZERO))
            return Observable.fourier({(0, 0): c}, self._require_space())
        return Observable.fourier(grid_to_modes(self.values, self.space, cutoff), self.space)

    def mean(self) -> complex:
        """Normalized Liouville average over the space's fundamental window."""
        if self.kind == "fourier":
            return complex(self.modes.get((0, 0), 0))
        vals = self.on_grid()
        return complex(np.mean(vals))

    # calculus

    def derivative(self, nq: int = 0, np_: int = 0) -> "Observable":
        if self.kind == "poly":
            out = {}
            for (i, j), c in self.terms.items():
                if i < nq or j < np_:
                    continue
                f = math.perm(i, nq) * math.perm(j, np_)
                out[(i - nq, j - np_)] = c * QQ_I(f, 0)
            return Observable.poly(out, self.space)
        if self.kind == "fourier":
            out = {}
            for (a, b), c in self.modes.items():
                kq, kp = self.space.mode_wavevector(a, b)
                out[(a, b)] = c * (1j * kq) ** nq * (1j * kp) ** np_
            return Observable.fourier(out, self.space)
        return Observable.grid(spectral_derivative(self.values, self.space, nq, np_), self.space)

    # arithmetic

    def _coerce(self, other):
        if isinstance(other, Observable):
            return other
        if isinstance(other, (Number, Fraction)) or isinstance(other, QQ_I.dtype):
            return Observable.constant(other, self.space)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b = align(self, other)
        if a.kind == "poly":
            out = dict(a.terms)
            for k, c in b.terms.items():
                out[k] = out.get(k, ZERO) + c
            return Observable.poly(out, a.space or b.space)
        if a.kind == "fourier":
            out = dict(a.modes)
            for k, c in b.modes.items():
                out[k] = out.get(k, 0) + c
            return Observable.fourier({k: v for k, v in out.items() if v != 0}, a.space)
        return Observable.grid(a.values + b.values, a.space)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Observable":
        if self.kind == "poly":
            e = exact(c)
            return Observable.poly({k: v * e for k, v in self.terms.items()}, self.space)
        c = complex(c) if not isinstance(c, QQ_I.dtype) else to_complex(c)
        if self.kind == "fourier":
            return Observable.fourier({k: v * c for k, v in self.modes.items()}, self.space)
        vals = self.values * (c.real if c.imag == 0 else c)
        return Observable.grid(vals, self.space)

    def __mul__(self, other):
        if not isinstance(other, Observable):
            if isinstance(other, (Number, Fraction)) or isinstance(other, QQ_I.dtype):
                return self.scale(other)
            return NotImplemented
        a, b = align(self, other)
        if a.kind == "poly":
            out = {}
            for (i, j), c in a.terms.items():
                for (k, l), d in b.terms.items():
                    key = (i + k, j + l)
                    out[key] = out.get(key, ZERO) + c * d
            return Observable.poly(out, a.space or b.space)
        if a.kind == "fourier":
            return Observable.fourier(convolve_modes(a.modes, b.modes), a.space)
        return Observable.grid(a.values * b.values, a.space)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, Observable):
            return NotImplemented
        e = exact(c)
        return self.scale(QQ_I(1, 0) / e) if self.kind == "poly" else self.scale(1.0 / complex(c))

    # comparison and display

    def equals(self, other: "Observable", tol: float = 0.0) -> bool:
        a, b = align(self, other)
        if a.kind == "poly":
            return a.terms == b.terms
        d = (a - b)
        if d.kind == "fourier":
            return all(abs(v) <= tol for v in d.modes.values())
        return bool(np.all(np.abs(d.values) <= tol))

    def __eq__(self, other):
        if not isinstance(other, Observable):
            return NotImplemented
        try:
            return self.equals(other)
        except (PhaseSpaceMismatch, TypeError):
            return False

    __hash__ = None

    def to_sympy(self):
        if self.kind == "poly":
            return sympy.Add(*[QQ_I.to_sympy(c) * Q_SYM ** i * P_SYM ** j
                               for (i, j), c in self.terms.items()])
        if self.kind == "fourier":
            kq = 2 * sympy.pi / sympy.nsimplify(self.space.Lq, [sympy.pi])
            kp = 2 * sympy.pi / sympy.nsimplify(self.space.Lp, [sympy.pi])
            return sympy.Add(*[sympy.nsimplify(c) * sympy.exp(sympy.I * (a * kq * Q_SYM + b * kp * P_SYM))
                               for (a, b), c in self.modes.items()])
        raise TypeError("grid observables have no symbolic form")

    def format(self) -> str:
        if self.kind == "fourier":
            return _format_fourier(self)
        if self.kind != "poly":
            return repr(self)
        if not self.terms:
            return "0"
        parts = []
        for (i, j) in sorted(self.terms, key=lambda k: (-(k[0] + k[1]), -k[0])):
            c = self.terms[(i, j)]
            mono = "*".join(([f"q^{i}" if i > 1 else "q"] if i else []) +
                            ([f"p^{j}" if j > 1 else "p"] if j else []))
            cs = format_coefficient(c)
            if mono:
                if cs == "1":
                    term = mono
                elif cs == "-1":
                    term = "-" + mono
                else:
                    term = f"{cs}*{mono}"
            else:
                term = cs
            parts.append(term)
        out = parts[0]
        for t in parts[1:]:
            out += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
        return out

    def __repr__(self):
        if self.kind == "poly":
            return f"Observable.poly({self.format()})"
        if self.kind == "fourier":
            return f"Observable.fourier({len(self.modes)} modes)"
        return f"Observable.grid({self.values.shape}, {self.values.dtype})"

    # serialization

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "space": self.space.to_dict() if self.space else None}
        if self.kind == "poly":
            d["terms"] = [[i, j, str(QQ.to_sympy(c.x)), str(QQ.to_sympy(c.y))]
                          for (i, j), c in sorted(self.terms.items())]
        elif self.kind == "fourier":
            d["modes"] = [[a, b, float(c.real), float(c.imag)] for (a, b), c in sorted(self.modes.items())]
        else:
            v = np.asarray(self.values, dtype=complex)
            d["real"] = v.real.tolist()
            d["imag"] = v.imag.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Observable":
        space = PhaseSpace.from_dict(d["space"]) if d.get("space") else None
        if d["kind"] == "poly":
            return cls.poly({(i, j): QQ_I(QQ(Fraction(re).numerator, Fraction(re).denominator),
                                          QQ(Fraction(im).numerator, Fraction(im).denominator))
                             for i, j, re, im in d["terms"]}, space)
        if d["kind"] == "fourier":
            return cls.fourier({(a, b): complex(re, im) for a, b, re, im in d["modes"]}, space)
        vals = np.array(d["real"]) + 1j * np.array(d["imag"])
        return cls.grid(vals, space)


def _parse_expression(text: str):
    from sympy.parsing.sympy_parser import (convert_xor, implicit_multiplication_application,
                                            parse_expr, standard_transformations)
    tr = standard_transformations + (convert_xor, implicit_multiplication_application)
    try:
        return parse_expr(text, local_dict={"q": Q_SYM, "p": P_SYM, "i": sympy.I, "I": sympy.I},
                          transformations=tr, evaluate=True)
    except Exception as exc:
        raise ValueError(f"cannot parse observable {text!r}: {exc}") from None


def align(a: Observable, b: Observable):
    """Bring two observables to a shared representation.

    poly+poly stays exact, fourier+fourier stays sparse, anything else is
    sampled on the shared grid.
    """
    sa, sb = a.space, b.space
    if sa is not None and sb is not None and sa != sb:
        if a.kind == "poly":
            sa = sb
        elif b.kind == "poly":
            sb = sa
        else:
            raise PhaseSpaceMismatch("observables live on different phase spaces")
    space = sa or sb
    if a.kind == b.kind:
        if a.kind == "poly":
            return a, b
        return a, b
    if {a.kind, b.kind} == {"poly", "fourier"}:
        pa = a if a.kind == "poly" else b
        if pa.degree <= 0:
            fa = pa.with_space(space).to_fourier()
            return (fa, b) if a.kind == "poly" else (a, fa)
    if space is None:
        raise PhaseSpaceMismatch("no phase space available to grid the operands")
    return a.to_grid(space), b.to_grid(space)


def convolve_modes(fm: dict, gm: dict, weight=None) -> dict:
    """Sum over pairs c_k d_k' w(k, k') into mode k + k'."""
    if not fm or not gm:
        return {}
    ka = np.array(list(fm.keys()), dtype=np.int64)
    ca = np.array(list(fm.values()), dtype=complex)
    kb = np.array(list(gm.keys()), dtype=np.int64)
    cb = np.array(list(gm.values()), dtype=complex)
    prod = np.outer(ca, cb)
    if weight is not None:
        prod = prod * weight(ka[:, None, :], kb[None, :, :])
    kk = (ka[:, None, :] + kb[None, :, :]).reshape(-1, 2)
    keys, inv = np.unique(kk, axis=0, return_inverse=True)
    inv = inv.ravel()
    vals = np.bincount(inv, weights=prod.real.ravel(), minlength=len(keys)) \
        + 1j * np.bincount(inv, weights=prod.imag.ravel(), minlength=len(keys))
    scale = max(np.abs(ca).max() * np.abs(cb).max(), 1e-300)
    keep = np.abs(vals) > 1e-15 * scale
    return {(int(a), int(b)): complex(v) for (a, b), v in zip(keys[keep], vals[keep])}


def _trig_modes(expr, space: PhaseSpace) -> dict:
    """Plane-wave coefficients of a trigonometric polynomial in q, p."""
    e = sympy.expand(expr.rewrite(sympy.exp))
    e = sympy.powsimp(sympy.expand(e), combine="exp")
    modes: dict = {}
    for term in sympy.Add.make_args(e):
        coeff, rest = sympy.S.One, []
        exponent = sympy.S.Zero
        for factor in sympy.Mul.make_args(term):
            if factor.free_symbols & {Q_SYM, P_SYM}:
                base, ex = factor.as_base_exp()
                if base is sympy.E or isinstance(factor, sympy.exp):
                    exponent += factor.exp if isinstance(factor, sympy.exp) else ex
                    continue
                rest.append(factor)
            else:
                coeff *= factor
        if rest:
            raise ValueError(f"term {term} is neither polynomial nor a plane wave")
        lin = sympy.expand(exponent / sympy.I)
        cq = lin.coeff(Q_SYM)
        cp = lin.coeff(P_SYM)
        if sympy.simplify(lin - cq * Q_SYM - cp * P_SYM) != 0:
            raise ValueError(f"exponent {exponent} is not linear in q, p")
        a = sympy.nsimplify(cq * space.Lq / (2 * sympy.pi))
        b = sympy.nsimplify(cp * space.Lp / (2 * sympy.pi))
        if not (a.is_integer and b.is_integer):
            raise ValueError(f"wavevector ({cq}, {cp}) is not commensurate with the space")
        key = (int(a), int(b))
        modes[key] = modes.get(key, 0) + complex(sympy.N(coeff))
    return {k: v for k, v in modes.items() if v != 0}


def _format_number(x: float) -> str:
    return f"{x:.12g}"


def _format_phase(kq: float, kp: float) -> str:
    parts = []
    for k, v in ((kq, "q"), (kp, "p")):
        if k == 0:
            continue
        c = _format_number(abs(k))
        body = v if c == "1" else f"{c}*{v}"
        parts.append(("- " if k < 0 else "+ ") + body)
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def _format_fourier(obs: "Observable", tol: float = 1e-15) -> str:
    """Sum of cos/sin terms, pairing each mode with its negative."""
    terms, done = [], set()
    for (a, b) in sorted(obs.modes, key=lambda m: (abs(m[0]) + abs(m[1]), m)):
        if (a, b) in done:
            continue
        c = complex(obs.modes[(a, b)])
        c2 = complex(obs.modes.get((-a, -b), 0.0))
        done.update({(a, b), (-a, -b)})
        if (a, b) == (0, 0):
            if abs(c) > tol:
                terms.append((c, ""))
            continue
        if a < 0 or (a == 0 and b < 0):
            a, b, c, c2 = -a, -b, c2, c
        kq, kp = obs.space.mode_wavevector(a, b)
        phase = _format_phase(float(kq), float(kp))
        # c e^{i x} + c2 e^{-i x} = (c + c2) cos x + i (c - c2) sin x
        for coef, fn in ((c + c2, "cos"), (1j * (c - c2), "sin")):
            if abs(coef) > tol:
                terms.append((coef, f"{fn}({phase})"))
    if not terms:
        return "0"
    out = []
    for coef, fn in terms:
        if abs(coef.imag) <= tol:
            num, neg = _format_number(abs(coef.real)), coef.real < 0
        elif abs(coef.real) <= tol:
            num, neg = _format_number(abs(coef.imag)) + "*i", coef.imag < 0
        else:
            sign = "-" if coef.imag < 0 else "+"
            num, neg = f"({_format_number(coef.real)} {sign} {_format_number(abs(coef.imag))}*i)", False
        body = fn if (num == "1" and fn) else (f"{num}*{fn}" if fn else num)
        out.append(("- " if neg else "+ ") + body)
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]
