"""Closed-form reference values used to cross-check the generic machinery."""

from __future__ import annotations

import numpy as np

from .expr import diff, evaluate_many
from .geometry import MechanicalSystem


def normal_form_fields(n: int):
    """(e, g) of the normal form: g = d/dx1, e = (0, x1, ..., x_{n-1})."""
    e = ["0"] + [f"x{i}" for i in range(1, n)]
    g = ["1"] + ["0"] * (n - 1)
    return e, g


def _gamma_and_jet(sys: MechanicalSystem, X: np.ndarray):
    """Gamma[p, i, j, s] and its derivatives dGamma[p, i, j, s, k] (all 0-based)."""
    n = sys.n
    m = X.shape[0]
    G = np.zeros((m, n, n, n))
    dG = np.zeros((m, n, n, n, n))
    items = sys.gamma_items()
    exprs = []
    for _, v in items:
        exprs.append(v)
        exprs.extend(diff(v, k) for k in range(1, n + 1))
    vals = evaluate_many(exprs, X, sys.params) if exprs else []
    for idx, ((i, j, s), _) in enumerate(items):
        base = idx * (n + 1)
        for a, b in ((j, s), (s, j)):
            G[:, i - 1, a - 1, b - 1] = vals[base]
            for k in range(n):
                dG[:, i - 1, a - 1, b - 1, k] = vals[base + 1 + k]
    return G, dG


def lemma2_closed_form(sys: MechanicalSystem, k: int, j: int, points) -> np.ndarray:
    """nabla^2_{ad^{k-1} g, ad^{j-1} g} e for a system in normal form, from Gamma alone.

    Uses (-1)^{j+k} ( dGamma^i_js/dx^k e^s + Gamma^i_{j,k+1} + Gamma^i_{k,j+1}
    - Gamma^{i-1}_kj + (Gamma^d_js Gamma^i_kd - Gamma^d_kj Gamma^i_ds) e^s ),
    with Gamma^i_{., n+1} = 0 and Gamma^0 = 0.  ``k`` and ``j`` are 1-based.
    Returns an (m, n) array.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = sys.n
    G, dG = _gamma_and_jet(sys, X)
    e = np.zeros_like(X)
    e[:, 1:] = X[:, :-1]
    k0, j0 = k - 1, j - 1
    out = np.einsum("pis,ps->pi", dG[:, :, j0, :, k0], e)
    if k0 + 1 < n:
        out += G[:, :, j0, k0 + 1]
    if j0 + 1 < n:
        out += G[:, :, k0, j0 + 1]
    out[:, 1:] -= G[:, :-1, k0, j0]
    # Gamma^d_js Gamma^i_kd e^s - Gamma^d_kj Gamma^i_ds e^s
    out += np.einsum("pds,pid,ps->pi", G[:, :, j0, :], G[:, :, k0, :], e)
    out -= np.einsum("pd,pids,ps->pi", G[:, :, k0, j0], G, e)
    return (-1) ** (j + k) * out


def controllability_matrix(E, b) -> np.ndarray:
    E = np.asarray(E, dtype=float)
    b = np.asarray(b, dtype=float)
    cols = [b]
    for _ in range(len(b) - 1):
        cols.append(E @ cols[-1])
    return np.column_stack(cols)


def lms_ad_sequence(E, b) -> list:
    """ad_e^i g = (-1)^i E^i b for e = Ex, g = b."""
    E = np.asarray(E, dtype=float)
    v = np.asarray(b, dtype=float)
    out = []
    for i in range(len(v)):
        out.append((-1) ** i * v)
        v = E @ v
    return out
