"""Exact join entropies for piecewise-affine maps of the unit square.

Atoms of P v T^{-1}P v ... v T^{-(n-1)}P are tracked as convex polygons.
One step pulls every polygon back through the inverse branches of T, cuts
the images along the dyadic grid (wrapping across the unit lattice on a
torus) and relabels by (cell, parent atom). Areas come from the shoelace
formula, so the entropies are exact up to floating-point rounding.

Polygons are stored padded in an array V of shape (pieces, width, 2) with
vertex counts nv; clipping is a vectorised Sutherland-Hodgman pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

AREA_EPS = 1e-17
DUP_EPS = 1e-14


@dataclass(frozen=True)
class AffineBranch:
    """Inverse branch x -> A x + b, applied where every a . x <= c holds."""

    A: np.ndarray
    b: np.ndarray
    constraints: tuple = ()


def _compact(out, ok):
    order = np.argsort(~ok, axis=1, kind="stable")
    out = np.take_along_axis(out, order[:, :, None], 1)
    return out, ok.sum(1)


def clip(V, nv, a, c):
    """Keep the part of each polygon with a . x <= c (c per polygon)."""
    P, Vm, _ = V.shape
    idx = np.arange(Vm)[None, :]
    valid = idx < nv[:, None]
    d = V @ a - c[:, None]
    nxt = np.where(idx + 1 < nv[:, None], idx + 1, 0)
    Vn = np.take_along_axis(V, nxt[:, :, None], 1)
    dn = np.take_along_axis(d, nxt, 1)
    inside = d <= 0
    cross = (((d < 0) & (dn > 0)) | ((d > 0) & (dn < 0))) & valid
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, d / (d - dn), 0.0)
    X = V + t[:, :, None] * (Vn - V)
    out = np.empty((P, 2 * Vm, 2))
    out[:, 0::2] = V
    out[:, 1::2] = X
    ok = np.empty((P, 2 * Vm), bool)
    ok[:, 0::2] = inside & valid
    ok[:, 1::2] = cross
    out, nnv = _compact(out, ok)
    # drop vertices that coincide with their cyclic predecessor
    ok = np.arange(out.shape[1])[None, :] < nnv[:, None]
    prev = np.roll(out, 1, axis=1)
    prev[:, 0] = np.take_along_axis(out, np.maximum(nnv - 1, 0)[:, None, None], 1)[:, 0]
    ok &= ~(np.abs(out - prev).max(2) < DUP_EPS)
    out, nnv = _compact(out, ok)
    width = max(int(nnv.max()) if P else 0, 3)
    return out[:, :width], nnv


def area(V, nv):
    idx = np.arange(V.shape[1])[None, :]
    nxt = np.where(idx + 1 < nv[:, None], idx + 1, 0)
    Vn = np.take_along_axis(V, nxt[:, :, None], 1)
    cr = V[:, :, 0] * Vn[:, :, 1] - Vn[:, :, 0] * V[:, :, 1]
    cr[idx >= nv[:, None]] = 0
    return 0.5 * cr.sum(1)


def _bounds(V, nv, axis):
    mask = np.arange(V.shape[1])[None, :] < nv[:, None]
    lo = np.where(mask, V[:, :, axis], np.inf).min(1)
    hi = np.where(mask, V[:, :, axis], -np.inf).max(1)
    return lo, hi


def split_axis(V, nv, axis, m):
    """Cut polygons along the lines x_axis = j / m; returns pieces and cell indices.

    Cell indices are unbounded integers, so pieces outside [0, 1) can be
    wrapped back by the caller.
    """
    lo, hi = _bounds(V, nv, axis)
    i0 = np.floor(lo * m).astype(np.int64)
    i1 = np.ceil(hi * m).astype(np.int64)
    cnt = np.maximum(i1 - i0, 1)
    rep = np.repeat(np.arange(len(nv)), cnt)
    cell = i0[rep] + np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    V, nv = V[rep], nv[rep]
    a = np.zeros(2)
    a[axis] = 1.0
    V, nv = clip(V, nv, -a, -cell / m)
    V, nv = clip(V, nv, a, (cell + 1) / m)
    keep = nv >= 3
    V, nv, rep, cell = V[keep], nv[keep], rep[keep], cell[keep]
    ar = area(V, nv)
    keep = ar > AREA_EPS
    return V[keep], nv[keep], rep[keep], cell[keep], ar[keep]


def _entropy_bits(w):
    w = w[w > 0]
    w = w / w.sum()
    return float(-(w * np.log2(w)).sum())


def dyadic_squares(m: int):
    i, j = np.divmod(np.arange(m * m), m)
    V = np.stack([np.stack([i, j], 1), np.stack([i + 1, j], 1),
                  np.stack([i + 1, j + 1], 1), np.stack([i, j + 1], 1)], 1) / m
    return V.astype(float), np.full(m * m, 4)


@dataclass
class ExactJoin:
    entropies: list
    pieces: list
    atoms: list
    total_area: list
    stop_reason: str


def exact_join_entropies(branches: Sequence[AffineBranch], m: int, n_max: int, torus: bool = True,
                         max_pieces: int = 1_500_000, growth: float = 2.7) -> ExactJoin:
    """Entropies H_1..H_n of joins of the m x m dyadic partition.

    Stops early when the predicted next piece count (current count times
    `growth`) would exceed `max_pieces`.
    """
    V, nv = dyadic_squares(m)
    lab = np.arange(m * m)
    nl = m * m
    ar = area(V, nv)
    H = [_entropy_bits(ar)]
    pieces, atoms, total = [len(nv)], [nl], [float(ar.sum())]
    reason = "n_max reached"
    for n in range(2, n_max + 1):
        if len(nv) * growth > max_pieces:
            reason = f"piece budget {max_pieces} reached at n={n - 1}"
            break
        Vs, nvs, srcs = [], [], []
        for br in branches:
            Vb, nvb, src = V, nv, np.arange(len(nv))
            for a, c in br.constraints:
                Vb, nvb = clip(Vb, nvb, np.asarray(a, float), np.full(len(nvb), float(c)))
                keep = (nvb >= 3)
                Vb, nvb, src = Vb[keep], nvb[keep], src[keep]
                keep = area(Vb, nvb) > AREA_EPS
                Vb, nvb, src = Vb[keep], nvb[keep], src[keep]
            Vs.append(Vb @ np.asarray(br.A, float).T + np.asarray(br.b, float))
            nvs.append(nvb)
            srcs.append(src)
        width = max(x.shape[1] for x in Vs)
        Vs = [np.pad(x, ((0, 0), (0, width - x.shape[1]), (0, 0))) for x in Vs]
        V, nv, src = np.concatenate(Vs), np.concatenate(nvs), np.concatenate(srcs)
        V, nv, r1, cx, _ = split_axis(V, nv, 0, m)
        V, nv, r2, cy, ar = split_axis(V, nv, 1, m)
        src, cx = src[r1][r2], cx[r2]
        if torus:
            shift = np.stack([np.floor(cx / m), np.floor(cy / m)], 1)
            V = V - shift[:, None, :]
            cx, cy = cx % m, cy % m
        elif (cx.min(initial=0) < 0 or cx.max(initial=0) >= m or cy.min(initial=0) < 0
              or cy.max(initial=0) >= m):
            raise ValueError("inverse branches left the unit square")
        code = (cx * m + cy) * nl + lab[src]
        uniq, lab = np.unique(code, return_inverse=True)
        nl = len(uniq)
        H.append(_entropy_bits(np.bincount(lab, weights=ar)))
        pieces.append(len(nv))
        atoms.append(nl)
        total.append(float(ar.sum()))
    return ExactJoin(H, pieces, atoms, total, reason)


def pullback_cell_areas(branches: Sequence[AffineBranch], m: int, torus: bool = True) -> np.ndarray:
    """Areas of T^{-1}(C) for every dyadic cell C, from one exact pull-back step."""
    V, nv = dyadic_squares(m)
    out = np.zeros(m * m)
    for br in branches:
        Vb, nvb, src = V, nv, np.arange(len(nv))
        for a, c in br.constraints:
            Vb, nvb = clip(Vb, nvb, np.asarray(a, float), np.full(len(nvb), float(c)))
            keep = nvb >= 3
            Vb, nvb, src = Vb[keep], nvb[keep], src[keep]
        Vb = Vb @ np.asarray(br.A, float).T + np.asarray(br.b, float)
        ar = area(Vb, nvb)
        out += np.bincount(src, weights=ar, minlength=m * m)
    return out


def interval_join_entropies(shift: float, m: int, n_max: int) -> list:
    """Entropies of joins of {[j/m, (j+1)/m)} under x -> x + shift on the circle."""
    H = []
    base = np.arange(m) / m
    for n in range(1, n_max + 1):
        pts = np.mod(base[None, :] - shift * np.arange(n)[:, None], 1.0).ravel()
        pts = np.unique(np.concatenate([pts, [0.0]]))
        lengths = np.diff(np.concatenate([pts, [1.0]]))
        H.append(_entropy_bits(lengths[lengths > 0]))
    return H
