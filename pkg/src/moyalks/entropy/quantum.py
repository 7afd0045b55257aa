"""Entropy estimates for the quantum (Moyal) time-one evolution.

Two estimators are provided.

quasi-probability
    Atom indicators chi_i are propagated on the grid with the Moyal
    time-one map U. At each grid point x the products
    prod_k (U^k chi_{i_k})(x) give a quasi-probability for the itinerary
    (i_0, ..., i_{n-1}); summed over points they play the role of cylinder
    measures. Small contributions are pruned per point, negative cylinder
    weights are clipped, and both effects are reported.

symbol-point
    The coordinate symbols e^{2 pi i q / Lq} and e^{2 pi i p / Lp} are
    propagated once with U; their phases define a point map S of the
    torus, and the classical sampled estimator is applied to S. Classically
    S is the inverse time-one map, which has the same entropy.

When the quantum evolution is itself a point flow (hbar = 0, or quadratic
dynamics) both estimators reduce to the classical computation on the same
sampling plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import map_coordinates

from ..errors import StatisticsError, UnsupportedError
from ..flow import FlowSpec, TimeOneMap, is_point_flow
from ..geometry.observable import top_mode_fraction
from .partition import Box, DyadicPartition, PartitionFamily, SamplingPlan
from .rates import (CONV_TOL, MIN_OCCUPANCY, EntropyReport, RateEstimate, ks_entropy, rate_from_entropies,
                    summarize)
from .systems import PointMapSystem, from_flow

ESTIMATORS = ("quasi-probability", "symbol-point")
NEGATIVITY_LIMIT = 0.2
CHAOS_THRESHOLD = 0.05


@dataclass
class QuasiDistribution:
    """Quasi-probabilities of the n-step cylinders of a partition."""

    codes: np.ndarray
    weights: np.ndarray
    n: int
    negativity_mass: float
    truncated_mass: float
    points: int
    reduced_to_classical: bool = False

    @property
    def unreliable(self) -> bool:
        return self.negativity_mass > NEGATIVITY_LIMIT

    def entropy(self) -> float:
        w = np.clip(self.weights, 0, None)
        w = w[w > 0]
        w = w / w.sum()
        return float(-(w * np.log2(w)).sum())


def _torus_box(spec: FlowSpec) -> Box:
    s = spec.space
    return Box(0.0, 0.0, s.Lq, s.Lp)


def _default_domain(spec: FlowSpec):
    if spec.space.kind == "torus":
        return _torus_box(spec)
    raise UnsupportedError("plane-window flows need an explicit invariant domain")


def _evolved_atoms(partition: DyadicPartition, spec: FlowSpec, n: int, smoothing: Optional[float] = None):
    """Grid values (U^k chi_i)(x) for k < n, shape (n, atoms, Nq, Np).

    Indicators are first mollified with a Gaussian of variance `smoothing`
    (default hbar / 2, the coherent-state scale); the mollified atoms still
    sum to one.
    """
    space = spec.space
    Q, P = space.grid()
    lab = partition.label(Q, P)
    prop = TimeOneMap(spec)
    var = 0.5 * spec.hbar if smoothing is None else float(smoothing)
    kq, kp = space.wavenumbers()
    damp = np.exp(-0.5 * var * (kq[:, None] ** 2 + kp[None, :] ** 2))
    out = np.empty((n, partition.n_atoms) + space.shape)
    for i in range(partition.n_atoms):
        f = (lab == i).astype(float)
        if var > 0:
            f = np.fft.ifft2(np.fft.fft2(f) * damp).real
        for k in range(n):
            out[k, i] = f
            if k + 1 < n:
                f = prop.apply_values(f)
    return out


def _expand(entries, vals_k, n_atoms, prune, top_m):
    """Extend per-point itineraries by one step, pruning small products."""
    pt, code, w = entries
    # candidate atoms per point at this step, largest |value| first
    V = vals_k.reshape(n_atoms, -1).T                      # (points, atoms)
    order = np.argsort(-np.abs(V), axis=1, kind="stable")[:, :top_m]
    cand = np.take_along_axis(V, order, 1)
    # |mass| of the atoms that did not make the top_m cut
    excluded = np.abs(V).sum(axis=1) - np.abs(cand).sum(axis=1)
    cut = float((np.abs(w) * excluded[pt]).sum())
    newpt = np.repeat(pt, top_m)
    newcode = (code[:, None] * n_atoms + order[pt]).ravel()
    neww = (w[:, None] * cand[pt]).ravel()
    keep = neww != 0
    newpt, newcode, neww = newpt[keep], newcode[keep], neww[keep]
    # per-point relative threshold
    mx = np.zeros(V.shape[0])
    np.maximum.at(mx, newpt, np.abs(neww))
    keep = np.abs(neww) >= prune * mx[newpt]
    dropped = float(np.abs(neww[~keep]).sum()) + cut
    return (newpt[keep], newcode[keep], neww[keep]), dropped


def _check_partition(partition, spec):
    if not isinstance(partition, DyadicPartition) or not partition.box.same_region(_default_domain(spec)):
        raise ValueError("the partition must be dyadic on the flow's torus")


def _distribution(code, w, npts, n, truncated):
    codes, inv = np.unique(code, return_inverse=True)
    weights = np.bincount(inv.ravel(), weights=w) / npts
    neg = float(-weights[weights < 0].sum() / np.abs(weights).sum()) + 0.0 if weights.size else 0.0
    return QuasiDistribution(codes, weights, n, neg, truncated / npts, npts)


def quasi_levels(partition: DyadicPartition, spec: FlowSpec, n_max: int, prune: float = 1e-2,
                 top_m: int = 4, smoothing: Optional[float] = None, max_entries: int = 30_000_000):
    """Yield the quasi-distributions of the 1..n_max step refinements."""
    _check_partition(partition, spec)
    if is_point_flow(spec):
        # exact pull-back on the grid points
        inverse = from_flow(spec, _torus_box(spec)).point_map().inverse
        Q, P = spec.space.grid()
        q, p = Q.ravel(), P.ravel()
        code = np.zeros(q.size, dtype=np.int64)
        for n in range(1, n_max + 1):
            code = code * partition.n_atoms + partition.label(q, p)
            q, p = inverse(q, p)
            codes, counts = np.unique(code, return_counts=True)
            yield QuasiDistribution(codes, counts / q.size, n, 0.0, 0.0, q.size, True)
        return
    vals = _evolved_atoms(partition, spec, n_max, smoothing)
    npts = vals[0, 0].size
    # one empty itinerary of weight 1 per grid point
    entries = (np.arange(npts), np.zeros(npts, dtype=np.int64), np.ones(npts))
    truncated = 0.0
    for k in range(n_max):
        if entries[0].size * top_m > max_entries:
            raise StatisticsError(f"itinerary budget of {max_entries} entries exceeded at n={k + 1}")
        entries, dropped = _expand(entries, vals[k], partition.n_atoms, prune, top_m)
        truncated += dropped
        yield _distribution(entries[1], entries[2], npts, k + 1, truncated)


def quantum_refinement_distribution(partition: DyadicPartition, spec: FlowSpec, n: int,
                                    prune: float = 1e-2, top_m: int = 4, smoothing: Optional[float] = None,
                                    max_entries: int = 30_000_000) -> QuasiDistribution:
    """Quasi-probabilities of the n-fold quantum refinement of a dyadic partition."""
    if n < 1:
        raise ValueError("n must be at least 1")
    for qd in quasi_levels(partition, spec, n, prune, top_m, smoothing, max_entries):
        pass
    return qd


# ------------------------------------------------------------- symbol map

@dataclass
class SymbolMap:
    """Point map read off from evolved coordinate symbols."""

    system: PointMapSystem
    resolution: float


def symbol_point_map(spec: FlowSpec, upsample: int = 4) -> SymbolMap:
    if spec.space.kind != "torus":
        raise UnsupportedError("the symbol-point estimator needs a torus")
    space = spec.space
    Q, P = space.grid()
    prop = TimeOneMap(spec)
    zq = prop.apply_values(np.exp(2j * np.pi * Q / space.Lq))
    zp = prop.apply_values(np.exp(2j * np.pi * P / space.Lp))
    res = max(top_mode_fraction(zq), top_mode_fraction(zp))
    Nq, Np = space.shape
    Mq, Mp = upsample * Nq, upsample * Np

    def fine(z):
        c = np.fft.fftshift(np.fft.fft2(z))
        pad = np.zeros((Mq, Mp), dtype=complex)
        oq, op = (Mq - Nq) // 2, (Mp - Np) // 2
        pad[oq:oq + Nq, op:op + Np] = c
        return np.fft.ifft2(np.fft.ifftshift(pad)) * (upsample * upsample)

    fq, fp = fine(zq), fine(zp)
    hq, hp = space.Lq / Mq, space.Lp / Mp

    def sample(F, q, p):
        coords = np.stack([np.mod(q, space.Lq) / hq, np.mod(p, space.Lp) / hp])
        re = map_coordinates(F.real, coords, order=3, mode="grid-wrap")
        im = map_coordinates(F.imag, coords, order=3, mode="grid-wrap")
        return re + 1j * im

    def fwd(q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        aq = np.angle(sample(fq, q, p))
        ap = np.angle(sample(fp, q, p))
        return np.mod(aq, 2 * np.pi) * space.Lq / (2 * np.pi), np.mod(ap, 2 * np.pi) * space.Lp / (2 * np.pi)

    name = f"symbol-map[{spec.name or 'flow'}, hbar={spec.hbar:g}]"
    return SymbolMap(PointMapSystem(name, fwd, _torus_box(spec), None, None, True, None,
                                    {"hbar": spec.hbar}), res)


# ------------------------------------------------------------------ reports

@dataclass
class QuantumEntropyReport:
    hbar: float
    estimator: str
    quantum: EntropyReport
    classical: Optional[EntropyReport]
    negativity: list
    notes: list = field(default_factory=list)

    @property
    def h_hbar(self) -> Optional[float]:
        return self.quantum.ks_estimate

    @property
    def h_hbar_best_effort(self) -> Optional[float]:
        return self.quantum.ks_estimate if self.quantum.ks_estimate is not None else self.quantum.best_effort

    @property
    def chaotic(self) -> Optional[bool]:
        if self.classical is None:
            return None
        h = self.classical.ks_estimate if self.classical.ks_estimate is not None else self.classical.best_effort
        return None if h is None else h > CHAOS_THRESHOLD

    @property
    def quantum_chaotic(self) -> Optional[bool]:
        h = self.h_hbar_best_effort
        return None if h is None else h > CHAOS_THRESHOLD

    @property
    def max_negativity(self) -> float:
        vals = [v for v in self.negativity if v is not None and math.isfinite(v)]
        return max(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "hbar": self.hbar, "estimator": self.estimator, "h_hbar": self.h_hbar,
            "h_hbar_best_effort": self.h_hbar_best_effort, "converged": not self.quantum.inconclusive,
            "max_negativity": self.max_negativity, "negativity": list(self.negativity),
            "chaotic": self.chaotic, "quantum_chaotic": self.quantum_chaotic,
            "quantum": self.quantum.to_dict(),
            "classical": self.classical.to_dict() if self.classical else None, "notes": list(self.notes),
        }


def _quasi_row(partition: DyadicPartition, spec: FlowSpec, n_max: int, min_occupancy: float,
               conv_tol: float, prune: float, top_m: int):
    """One table row for the quasi-probability estimator.

    Levels stop once grid points per effective cylinder (2^H_n) drop below
    min_occupancy. Rows with fewer than four levels keep their last
    conditional entropy as a best-effort value, flagged unconverged.
    """
    H, negs, note = [], [], "n_max reached"
    truncated = 0.0
    npts = spec.space.Nq * spec.space.Np
    levels = quasi_levels(partition, spec, n_max, prune, top_m)
    while True:
        try:
            qd = next(levels)
        except StopIteration:
            break
        except StatisticsError as exc:
            note = str(exc)
            break
        n = qd.n
        h = qd.entropy()
        if npts / 2.0 ** h < min_occupancy:
            note = f"grid-limited at n={n} ({npts} points, perplexity {2.0 ** h:.0f})"
            break
        H.append(h)
        negs.append(qd.negativity_mass)
        truncated = max(truncated, qd.truncated_mass)
    neg = max(negs) if negs else 0.0
    note += f"; truncated mass {truncated:.3g}"
    if neg > NEGATIVITY_LIMIT:
        note += f"; negativity {neg:.3g} above {NEGATIVITY_LIMIT}: unreliable"
    try:
        row = rate_from_entropies(H, partition.name, partition.depth, "quasi-probability", npts, note,
                                  conv_tol)
    except StatisticsError as exc:
        d = [H[0]] + [b - a for a, b in zip(H, H[1:])] if H else []
        rate = d[-1] if len(d) >= 2 else float("nan")
        row = RateEstimate(partition.name, partition.depth, H, d, float(rate), len(H), False,
                           "quasi-probability", npts, None, f"{exc}; best effort only")
    if neg > NEGATIVITY_LIMIT:
        row.converged = False
    row.negativity_mass = neg
    return row, neg


def ks_entropy_quantum(spec: FlowSpec, family: PartitionFamily, n_max: int,
                       plan: Optional[SamplingPlan] = None, estimator: str = "quasi-probability",
                       domain=None, method: str = "auto", min_occupancy: float = MIN_OCCUPANCY,
                       conv_tol: float = CONV_TOL, classical: bool = True, prune: float = 1e-2,
                       top_m: int = 4, quasi_n_max: Optional[int] = 5) -> QuantumEntropyReport:
    """Quantum entropy h_hbar with a matched classical run for comparison."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    plan = plan or SamplingPlan()
    domain = domain or _default_domain(spec)
    notes = []
    classical_sys = from_flow(spec.with_hbar(0.0), domain)
    classical_rep = ks_entropy(classical_sys, family, n_max, plan, method, min_occupancy,
                               conv_tol=conv_tol) if classical else None
    if is_point_flow(spec):
        if spec.hbar == 0 and classical_rep is not None:
            quantum = classical_rep
        else:
            quantum = ks_entropy(from_flow(spec, domain), family, n_max, plan, method, min_occupancy,
                                 conv_tol=conv_tol)
        notes.append("point flow: the quantum evolution transports points, so the classical "
                     "estimator applies unchanged")
        return QuantumEntropyReport(spec.hbar, estimator, quantum, classical_rep,
                                    [0.0] * len(quantum.rows), notes)
    if estimator == "symbol-point":
        sm = symbol_point_map(spec)
        if sm.resolution > 1e-8:
            notes.append(f"evolved symbols under-resolved (top-mode fraction {sm.resolution:.2g})")
        quantum = ks_entropy(sm.system, family, n_max, plan, "sampled", min_occupancy, conv_tol=conv_tol)
        return QuantumEntropyReport(spec.hbar, estimator, quantum, classical_rep,
                                    [0.0] * len(quantum.rows), notes)
    rows, negs = [], []
    for P in family:
        row, neg = _quasi_row(P, spec, min(quasi_n_max or n_max, n_max), min_occupancy, conv_tol, prune,
                              top_m)
        rows.append(row)
        negs.append(neg)
    settings = {"n_max": min(quasi_n_max or n_max, n_max), "grid": list(spec.space.shape), "prune": prune,
                "top_m": top_m, "min_occupancy": min_occupancy, "conv_tol": conv_tol}
    quantum = summarize(f"{spec.name}[hbar={spec.hbar:g}]", rows, settings, conv_tol)
    return QuantumEntropyReport(spec.hbar, estimator, quantum, classical_rep, negs, notes)


@dataclass
class SweepRow:
    hbar: float
    estimates: dict
    converged: dict
    negativity: dict
    classical: Optional[float]
    discrepancy: Optional[float]

    def to_dict(self) -> dict:
        return {"hbar": self.hbar, "estimates": self.estimates, "converged": self.converged,
                "negativity": self.negativity, "classical": self.classical, "discrepancy": self.discrepancy}


def quantum_sweep(spec: FlowSpec, hbars, family: PartitionFamily, n_max: int,
                  plan: Optional[SamplingPlan] = None, estimators=ESTIMATORS, **kw) -> list:
    """h_hbar over a list of hbar values with every requested estimator.

    The discrepancy column is the spread of the best-effort estimates across
    estimators at each hbar.
    """
    plan = plan or SamplingPlan()
    classical_rep = None
    out = []
    for h in hbars:
        est, conv, neg = {}, {}, {}
        for e in estimators:
            rep = ks_entropy_quantum(spec.with_hbar(h), family, n_max, plan, e,
                                     classical=classical_rep is None, **kw)
            if classical_rep is None:
                classical_rep = rep.classical
            est[e] = rep.h_hbar_best_effort
            conv[e] = not rep.quantum.inconclusive
            # symbol-point counts itineraries of a genuine point map, so its weights are never negative
            neg[e] = rep.max_negativity
        vals = [v for v in est.values() if v is not None and math.isfinite(v)]
        disc = (max(vals) - min(vals)) if len(vals) > 1 else None
        cls = classical_rep.ks_estimate if classical_rep.ks_estimate is not None else classical_rep.best_effort
        out.append(SweepRow(float(h), est, conv, neg, cls, disc))
    return out
