"""Flat two-dimensional phase spaces and their Liouville measure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

KINDS = ("torus", "plane-window")


@dataclass(frozen=True)
class PhaseSpace:
    """A periodic sampling window on the (q, p) plane with form dq^dp.

    A torus spans [0, Lq) x [0, Lp). A plane window is centred on the
    origin and spans [-Lq/2, Lq/2) x [-Lp/2, Lp/2); fields on it are
    continued periodically for spectral work.
    """

    kind: str = "torus"
    Lq: float = 2 * np.pi
    Lp: float = 2 * np.pi
    Nq: int = 64
    Np: int = 64
    form_coefficient: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown phase-space kind {self.kind!r}")
        if not (self.Lq > 0 and self.Lp > 0):
            raise ValueError("extent components must be strictly positive")
        for n in (self.Nq, self.Np):
            if int(n) != n or n < 8 or n % 2:
                raise ValueError("grid sizes must be even integers >= 8")
        if self.form_coefficient != 1.0:
            raise ValueError("only the standard form dq^dp is supported")

    @classmethod
    def torus(cls, Lq=2 * np.pi, Lp=2 * np.pi, N=64):
        return cls("torus", float(Lq), float(Lp), int(N), int(N))

    @classmethod
    def plane_window(cls, Lq, Lp=None, N=64):
        return cls("plane-window", float(Lq), float(Lq if Lp is None else Lp), int(N), int(N))

    @property
    def origin(self) -> tuple[float, float]:
        if self.kind == "torus":
            return 0.0, 0.0
        return -self.Lq / 2, -self.Lp / 2

    @property
    def shape(self) -> tuple[int, int]:
        return self.Nq, self.Np

    @property
    def area(self) -> float:
        return self.Lq * self.Lp

    @property
    def spacing(self) -> tuple[float, float]:
        return self.Lq / self.Nq, self.Lp / self.Np

    def axes(self):
        q0, p0 = self.origin
        hq, hp = self.spacing
        return q0 + hq * np.arange(self.Nq), p0 + hp * np.arange(self.Np)

    def grid(self):
        q, p = self.axes()
        return np.meshgrid(q, p, indexing="ij")

    def wavenumbers(self):
        hq, hp = self.spacing
        return (2 * np.pi * np.fft.fftfreq(self.Nq, d=hq),
                2 * np.pi * np.fft.fftfreq(self.Np, d=hp))

    def mode_wavevector(self, a, b):
        return 2 * np.pi * np.asarray(a) / self.Lq, 2 * np.pi * np.asarray(b) / self.Lp

    def wrap(self, q, p):
        """Map points back into the fundamental window."""
        q0, p0 = self.origin
        return (q0 + np.mod(np.asarray(q) - q0, self.Lq),
                p0 + np.mod(np.asarray(p) - p0, self.Lp))

    def with_grid(self, N):
        return PhaseSpace(self.kind, self.Lq, self.Lp, int(N), int(N))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "Lq": self.Lq, "Lp": self.Lp, "Nq": self.Nq, "Np": self.Np}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSpace":
        try:
            return cls(d["kind"], float(d["Lq"]), float(d["Lp"]), int(d["Nq"]), int(d["Np"]))
        except KeyError as exc:
            raise ValueError(f"phase space is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class MeasureDescriptor:
    """Constant-density measure on a flat phase space.

    `diagnostic` is an optional hook attached by measures that carry an
    extra consistency check (the Moyal measure uses it for the trace
    property).
    """

    density: float
    total_mass: float
    normalization: str = "raw"
    space: Optional[PhaseSpace] = None
    diagnostic: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.normalization not in ("raw", "probability"):
            raise ValueError("normalization must be 'raw' or 'probability'")
        if not self.total_mass > 0:
            raise ValueError("total mass must be positive")

    def normalized(self) -> "MeasureDescriptor":
        if self.normalization == "probability":
            return self
        return MeasureDescriptor(self.density / self.total_mass, 1.0, "probability",
                                 self.space, self.diagnostic)


def liouville_measure(space: PhaseSpace, normalization: str = "raw") -> MeasureDescriptor:
    # in two dimensions the top wedge power of dq^dp is the form itself
    m = MeasureDescriptor(1.0, space.area, "raw", space)
    return m.normalized() if normalization == "probability" else m
