"""Covariant derivatives and brackets assembled numerically at sample points.

Symbolic work stops at partial derivatives of the individual fields; the
contractions with Gamma are done with einsum.  Every array travels with a
magnitude array built from the same formulas applied to absolute values, so
that a result can be compared with the size of the terms that produced it.
Building nabla^2 symbolically multiplies already large expressions together,
which is what this module avoids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expr import Add, Expr, diff, evaluate_many
from .geometry import MechanicalSystem, VectorField

# relative size below which a computed quantity is indistinguishable from round-off
NOISE_FLOOR = 1e-11


@dataclass
class Tracked:
    """A value together with a bound on the magnitude of the terms summed to get it."""

    val: np.ndarray
    mag: np.ndarray

    def __add__(self, other):
        return Tracked(self.val + other.val, self.mag + other.mag)

    def __sub__(self, other):
        return Tracked(self.val - other.val, self.mag + other.mag)


def contract(spec: str, *ops: Tracked) -> Tracked:
    return Tracked(np.einsum(spec, *(o.val for o in ops)), np.einsum(spec, *(o.mag for o in ops)))


def _evaluate_tracked(exprs, X, params):
    """Values and term-magnitude sums of canonical expressions."""
    flat, spans = [], []
    for e in exprs:
        terms = e.terms if isinstance(e, Add) else (e,)
        spans.append((len(flat), len(terms)))
        flat.extend(terms)
    vals = evaluate_many(flat, X, params) if flat else []
    m = X.shape[0]
    out_v = np.empty((len(exprs), m))
    out_m = np.empty((len(exprs), m))
    for r, (start, count) in enumerate(spans):
        block = np.array([np.broadcast_to(np.asarray(v, dtype=float), (m,)) for v in vals[start:start + count]])
        out_v[r] = block.sum(axis=0)
        out_m[r] = np.abs(block).sum(axis=0)
    return out_v, out_m


@dataclass
class FieldJet:
    """Value, first and (optionally) second partials of a field at m points.

    Shapes: value (m, n); d1[p, i, j] = d_j F^i; d2[p, i, j, k] = d_j d_k F^i.
    """

    value: Tracked
    d1: Tracked
    d2: Optional[Tracked] = None


def field_jet(F: VectorField, X: np.ndarray, params, order: int = 1) -> FieldJet:
    n = F.n
    m = X.shape[0]
    comps = list(F.components)
    d1 = [[diff(c, j) for j in range(1, n + 1)] for c in comps]
    exprs = comps + [e for row in d1 for e in row]
    if order >= 2:
        exprs += [diff(d1[i][j], k) for i in range(n) for j in range(n) for k in range(1, n + 1)]
    v, mg = _evaluate_tracked(exprs, X, params)
    v, mg = v.T, mg.T
    val = Tracked(v[:, :n], mg[:, :n])
    first = Tracked(v[:, n:n + n * n].reshape(m, n, n), mg[:, n:n + n * n].reshape(m, n, n))
    second = None
    if order >= 2:
        second = Tracked(v[:, n + n * n:].reshape(m, n, n, n), mg[:, n + n * n:].reshape(m, n, n, n))
    return FieldJet(val, first, second)


@dataclass
class ConnectionJet:
    """G[p, i, j, k] = Gamma^i_jk and dG[p, i, j, k, l] = d_l Gamma^i_jk."""

    G: Tracked
    dG: Tracked


def connection_jet(sys: MechanicalSystem, X: np.ndarray) -> ConnectionJet:
    n = sys.n
    m = X.shape[0]
    G = np.zeros((m, n, n, n))
    dG = np.zeros((m, n, n, n, n))
    Gm = np.zeros_like(G)
    dGm = np.zeros_like(dG)
    items = sys.gamma_items()
    exprs: list = []
    for _, v in items:
        exprs.append(v)
        exprs.extend(diff(v, k) for k in range(1, n + 1))
    if exprs:
        vals, mags = _evaluate_tracked(exprs, X, sys.params)
        for idx, ((i, j, k), _) in enumerate(items):
            base = idx * (n + 1)
            for a, b in ((j, k), (k, j)):
                G[:, i - 1, a - 1, b - 1] = vals[base]
                Gm[:, i - 1, a - 1, b - 1] = mags[base]
                dG[:, i - 1, a - 1, b - 1, :] = vals[base + 1:base + 1 + n].T
                dGm[:, i - 1, a - 1, b - 1, :] = mags[base + 1:base + 1 + n].T
    return ConnectionJet(Tracked(G, Gm), Tracked(dG, dGm))


def covariant_at(C: ConnectionJet, X: Tracked, Y: FieldJet) -> Tracked:
    """nabla_X Y = DY X + Gamma(X, Y)."""
    return contract("pij,pj->pi", Y.d1, X) + contract("pijk,pj,pk->pi", C.G, X, Y.value)


def bracket_at(X: FieldJet, Y: FieldJet) -> Tracked:
    """[X, Y] = DY X - DX Y."""
    return contract("pij,pj->pi", Y.d1, X.value) - contract("pij,pj->pi", X.d1, Y.value)


def second_covariant_at(C: ConnectionJet, X: FieldJet, Y: FieldJet, Z: FieldJet) -> Tracked:
    """nabla^2_{X,Y} Z = nabla_X nabla_Y Z - nabla_{nabla_X Y} Z; Z needs second partials."""
    if Z.d2 is None:
        raise ValueError("Z needs a second-order jet")
    y, z = Y.value, Z.value
    W = covariant_at(C, y, Z)
    dW = (
        contract("pijl,pj->pil", Z.d2, y)
        + contract("pij,pjl->pil", Z.d1, Y.d1)
        + contract("pijkl,pj,pk->pil", C.dG, y, z)
        + contract("pijk,pjl,pk->pil", C.G, Y.d1, z)
        + contract("pijk,pj,pkl->pil", C.G, y, Z.d1)
    )
    x = X.value
    nXW = contract("pil,pl->pi", dW, x) + contract("pijk,pj,pk->pi", C.G, x, W)
    V = covariant_at(C, x, Y)
    nVZ = contract("pij,pj->pi", Z.d1, V) + contract("pijk,pj,pk->pi", C.G, V, z)
    return nXW - nVZ


def noise_level(v: Tracked, floor: float = NOISE_FLOOR) -> np.ndarray:
    """Per-point size of the round-off that can be present in v."""
    return floor * np.linalg.norm(v.mag, axis=1)
