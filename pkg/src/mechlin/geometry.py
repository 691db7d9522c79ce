"""Mechanical control systems and the connection calculus on them.

A system is ``xdot = y``, ``ydot^i = -Gamma^i_jk y^j y^k + e^i + g^i u`` on a
box in R^n.  Indices of variables and Christoffel symbols are 1-based, as in
the formulas; arrays returned by numeric helpers are 0-based.
"""

from __future__ import annotations

import threading
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .expr import (
    Expr,
    Var,
    add,
    as_expr_like,
    diff,
    evaluate_many,
    mul,
    parameters,
    simplify,
    sub,
    subs,
    variables,
)
from .expr.simplify import canon_add, canon_mul, const


class VectorField:
    """A vector field given by n expression components."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable):
        comps = tuple(simplify(as_expr_like(c)) for c in components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        object.__setattr__(self, "components", comps)

    def __setattr__(self, name, value):
        raise AttributeError("VectorField is immutable")

    @property
    def n(self) -> int:
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_dim(self, other)
        return VectorField(canon_add([a, b]) for a, b in zip(self, other))

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_dim(self, other)
        return VectorField(sub(a, b) for a, b in zip(self, other))

    def scale(self, f) -> "VectorField":
        f = simplify(as_expr_like(f))
        return VectorField(canon_mul([f, c]) for c in self)

    def is_zero(self) -> bool:
        from .expr import Const

        return all(isinstance(c, Const) and c.value == 0 for c in self)

    def __repr__(self):
        return "VectorField(" + ", ".join(str(c) for c in self) + ")"

    @classmethod
    def zero(cls, n: int) -> "VectorField":
        return cls([0] * n)

    @classmethod
    def basis(cls, n: int, i: int) -> "VectorField":
        """Coordinate field d/dx<i> (1-based)."""
        return cls([1 if k == i else 0 for k in range(1, n + 1)])


def _same_dim(X: VectorField, Y: VectorField) -> None:
    if X.n != Y.n:
        raise ValueError(f"dimension mismatch: {X.n} vs {Y.n}")


class MechanicalSystem:
    """The data (n, Gamma, e, g) plus a domain box and parameter values.

    ``gamma`` maps 1-based (i, j, k) to expressions; either ordering of (j, k)
    is accepted on input, entries are stored with j <= k and summed if both
    orderings are given.
    """

    def __init__(
        self,
        n: int,
        gamma: Mapping,
        e: Sequence,
        g: Sequence,
        domain=None,
        params: Optional[Mapping[str, float]] = None,
        name: str = "",
    ):
        if n < 2:
            raise ValueError("dimension must be at least 2")
        self.n = int(n)
        self.params = dict(params or {})
        self.name = name
        store: dict = {}
        for key, expr in gamma.items():
            i, j, k = (int(v) for v in key)
            if not all(1 <= v <= n for v in (i, j, k)):
                raise ValueError(f"Christoffel index {key} out of range for n={n}")
            if j > k:
                j, k = k, j
            val = simplify(as_expr_like(expr))
            store[(i, j, k)] = add(store[(i, j, k)], val) if (i, j, k) in store else val
        self._gamma = {key: v for key, v in store.items() if not _is_const_zero(v)}
        self.e = VectorField(e)
        self.g = VectorField(g)
        if self.e.n != n or self.g.n != n:
            raise ValueError("e and g must have n components")
        if domain is None:
            domain = np.tile([-1.0, 1.0], (n, 1))
        self.domain = np.array(domain, dtype=float).reshape(n, 2)
        if np.any(self.domain[:, 0] >= self.domain[:, 1]):
            raise ValueError("domain intervals must satisfy lo < hi")
        for ex in self.all_exprs():
            bad = [v for v in variables(ex) if v > n]
            if bad:
                raise ValueError(f"expression {ex} references x{bad[0]} beyond n={n}")
        missing = set().union(*(parameters(ex) for ex in self.all_exprs())) - self.params.keys()
        if missing:
            raise ValueError(f"unbound parameters: {', '.join(sorted(missing))}")
        self._lock = threading.RLock()
        self._ad: list = [self.g]
        self._memo: dict = {}

    def Gamma(self, i: int, j: int, k: int) -> Expr:
        if j > k:
            j, k = k, j
        return self._gamma.get((i, j, k), _ZERO)

    def gamma_items(self):
        """Nonzero stored symbols as ((i, j, k), expr) with j <= k."""
        return sorted(self._gamma.items())

    def all_exprs(self):
        return list(self._gamma.values()) + list(self.e) + list(self.g)

    def gamma_matrix_exprs(self, i: int):
        return [[self.Gamma(i, j, k) for k in range(1, self.n + 1)] for j in range(1, self.n + 1)]

    def gamma_values(self, points) -> np.ndarray:
        """Gamma evaluated at rows of ``points``: array (m, n, n, n) indexed [p, i, j, k]."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((X.shape[0], self.n, self.n, self.n))
        items = self.gamma_items()
        vals = evaluate_many([v for _, v in items], X, self.params)
        for ((i, j, k), _), v in zip(items, vals):
            out[:, i - 1, j - 1, k - 1] = v
            out[:, i - 1, k - 1, j - 1] = v
        return out

    def memo(self, key, build):
        """Thread-safe memoization of derived symbolic objects."""
        with self._lock:
            if key not in self._memo:
                self._memo[key] = build()
            return self._memo[key]

    def with_domain(self, domain) -> "MechanicalSystem":
        return MechanicalSystem(self.n, dict(self._gamma), self.e, self.g, domain, self.params, self.name)

    def __repr__(self):
        return f"MechanicalSystem(n={self.n}, name={self.name!r}, nonzero Gamma={len(self._gamma)})"


_ZERO = const(0)


def _is_const_zero(e: Expr) -> bool:
    from .expr import Const

    return isinstance(e, Const) and e.value == 0


def lie_derivative_fn(f, X: VectorField) -> Expr:
    """L_X f = df/dx^i X^i."""
    f = simplify(as_expr_like(f))
    vs = variables(f)
    return canon_add([canon_mul([diff(f, i), X[i - 1]]) for i in sorted(vs) if i <= X.n])


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y] = DY X - DX Y."""
    _same_dim(X, Y)
    n = X.n
    comps = []
    for i in range(n):
        terms = [canon_mul([diff(Y[i], j), X[j - 1]]) for j in sorted(variables(Y[i])) if j <= n]
        terms += [canon_mul([const(-1), diff(X[i], j), Y[j - 1]]) for j in sorted(variables(X[i])) if j <= n]
        comps.append(canon_add(terms))
    return VectorField(comps)


def covariant_derivative(sys: MechanicalSystem, X: VectorField, Y: VectorField) -> VectorField:
    """nabla_X Y = (dY^i/dx^j X^j + Gamma^i_jk X^j Y^k) d/dx^i."""
    _same_dim(X, Y)
    n = sys.n
    if X.n != n:
        raise ValueError("field dimension does not match the system")
    terms: list = [[] for _ in range(n)]
    for i in range(n):
        for j in sorted(variables(Y[i])):
            terms[i].append(canon_mul([diff(Y[i], j), X[j - 1]]))
    for (i, j, k), gam in sys.gamma_items():
        if j == k:
            terms[i - 1].append(canon_mul([gam, X[j - 1], Y[j - 1]]))
        else:
            terms[i - 1].append(canon_mul([gam, canon_add([canon_mul([X[j - 1], Y[k - 1]]), canon_mul([X[k - 1], Y[j - 1]])])]))
    return VectorField(canon_add(t) for t in terms)


def second_covariant_derivative(sys: MechanicalSystem, X: VectorField, Y: VectorField, Z: VectorField) -> VectorField:
    """nabla^2_{X,Y} Z = nabla_X nabla_Y Z - nabla_{nabla_X Y} Z."""
    return covariant_derivative(sys, X, covariant_derivative(sys, Y, Z)) - covariant_derivative(
        sys, covariant_derivative(sys, X, Y), Z
    )


def second_covariant_derivative_fn(sys: MechanicalSystem, X: VectorField, Y: VectorField, f) -> Expr:
    """nabla^2_{X,Y} f = L_X L_Y f - L_{nabla_X Y} f for a scalar f."""
    return sub(lie_derivative_fn(lie_derivative_fn(f, Y), X), lie_derivative_fn(f, covariant_derivative(sys, X, Y)))


def ad_sequence(sys: MechanicalSystem, k: int) -> list:
    """[g, ad_e g, ..., ad_e^k g], memoized per system."""
    if k < 0:
        raise ValueError("k must be non-negative")
    with sys._lock:
        while len(sys._ad) <= k:
            sys._ad.append(lie_bracket(sys.e, sys._ad[-1]))
        return list(sys._ad[: k + 1])


def evaluate_field(X: VectorField, points, bindings=None) -> np.ndarray:
    """Field values: a length-n vector for one point, (m, n) for an array of points."""
    P = np.asarray(points, dtype=float)
    single = P.ndim == 1
    P2 = P[None, :] if single else P
    cols = evaluate_many(list(X), P2, bindings or {})
    out = np.column_stack(cols) if cols else np.zeros((P2.shape[0], 0))
    return out[0] if single else out


def evaluate_fields(fields: Sequence[VectorField], points, bindings=None) -> np.ndarray:
    """Several fields at once: array (m, len(fields), n)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    flat = [c for X in fields for c in X]
    vals = evaluate_many(flat, P, bindings or {})
    n = fields[0].n if fields else 0
    arr = np.array(vals).reshape(len(fields), n, P.shape[0]) if fields else np.zeros((0, 0, P.shape[0]))
    return np.transpose(arr, (2, 0, 1))


def apply_feedback(sys: MechanicalSystem, alpha, beta, gamma) -> MechanicalSystem:
    """Closed loop under u = gamma_jk y^j y^k + alpha + beta u_new.

    Gamma~ = Gamma - g gamma, e~ = e + g alpha, g~ = g beta.  ``gamma`` is an
    n x n (symmetric) array of expressions or numbers.
    """
    n = sys.n
    alpha = simplify(as_expr_like(alpha))
    beta = simplify(as_expr_like(beta))
    G = [[simplify(as_expr_like(gamma[a][b])) for b in range(n)] for a in range(n)]
    new_gamma = {}
    for i in range(1, n + 1):
        gi = sys.g[i - 1]
        for j in range(1, n + 1):
            for k in range(j, n + 1):
                gjk = G[j - 1][k - 1]
                if gjk != G[k - 1][j - 1]:
                    gjk = mul(const(0.5), add(gjk, G[k - 1][j - 1]))
                val = sub(sys.Gamma(i, j, k), mul(gi, gjk))
                new_gamma[(i, j, k)] = val
    e_new = [add(sys.e[i], mul(sys.g[i], alpha)) for i in range(n)]
    g_new = [mul(sys.g[i], beta) for i in range(n)]
    return MechanicalSystem(n, new_gamma, e_new, g_new, sys.domain, sys.params, sys.name)


def _inverse_exprs(J):
    """Symbolic inverse of a square matrix of expressions via cofactors."""
    n = len(J)
    from .expr import Const

    if all(isinstance(J[a][b], Const) for a in range(n) for b in range(n)):
        M = np.array([[float(J[a][b].value) for b in range(n)] for a in range(n)])
        inv = np.linalg.inv(M)
        return [[const(float(inv[a, b])) for b in range(n)] for a in range(n)]
    det = _det(J)
    inv_det = simplify(as_expr_like(1) / det)
    return [[mul(inv_det, _cofactor(J, b, a)) for b in range(n)] for a in range(n)]


def _minor(J, r, c):
    return [[J[a][b] for b in range(len(J)) if b != c] for a in range(len(J)) if a != r]


def _det(J):
    n = len(J)
    if n == 1:
        return J[0][0]
    if n == 2:
        return sub(mul(J[0][0], J[1][1]), mul(J[0][1], J[1][0]))
    return add(*[mul(const((-1) ** c), J[0][c], _det(_minor(J, 0, c))) for c in range(n)])


def _cofactor(J, r, c):
    if len(J) == 1:
        return const(1)
    return mul(const((-1) ** (r + c)), _det(_minor(J, r, c)))


def change_coordinates(sys: MechanicalSystem, psi: Sequence, domain) -> MechanicalSystem:
    """Express the system in coordinates x~ with x = psi(x~).

    Gamma~ = J^-1 (Gamma(psi)(J., J.) + H), e~ = J^-1 e(psi), g~ = J^-1 g(psi),
    where J and H are the Jacobian and Hessians of psi.
    """
    n = sys.n
    psi = [simplify(as_expr_like(p)) for p in psi]
    if len(psi) != n:
        raise ValueError("psi must have n components")
    J = [[diff(psi[a], b) for b in range(1, n + 1)] for a in range(n)]
    Jinv = _inverse_exprs(J)
    sub_map = {i + 1: psi[i] for i in range(n)}
    Gs = {key: subs(v, sub_map) for key, v in sys.gamma_items()}
    es = [subs(v, sub_map) for v in sys.e]
    gs = [subs(v, sub_map) for v in sys.g]
    # pulled-back quadratic term, per original component a: Q^a_bc
    Q = [[[None] * n for _ in range(n)] for _ in range(n)]
    for a in range(n):
        for b in range(n):
            for c in range(b, n):
                terms = [diff(diff(psi[a], b + 1), c + 1)]
                for (i, j, k), gv in Gs.items():
                    if i - 1 != a:
                        continue
                    t = mul(J[j - 1][b], J[k - 1][c])
                    if j != k:
                        t = add(t, mul(J[k - 1][b], J[j - 1][c]))
                    terms.append(mul(gv, t))
                Q[a][b][c] = add(*terms)
    new_gamma = {}
    for i in range(n):
        for b in range(n):
            for c in range(b, n):
                new_gamma[(i + 1, b + 1, c + 1)] = add(*[mul(Jinv[i][a], Q[a][b][c]) for a in range(n)])
    e_new = [add(*[mul(Jinv[i][a], es[a]) for a in range(n)]) for i in range(n)]
    g_new = [add(*[mul(Jinv[i][a], gs[a]) for a in range(n)]) for i in range(n)]
    return MechanicalSystem(n, new_gamma, e_new, g_new, domain, sys.params, sys.name)


def linear_change(sys: MechanicalSystem, A, shift=None) -> tuple:
    """Coordinates x~ with x = A x~ + shift.  Returns (new system, map x -> x~).

    The new domain is the bounding box of the preimage of the old one.
    """
    A = np.asarray(A, dtype=float)
    n = sys.n
    shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    psi = [add(*([mul(const(float(A[a, b])), Var(b + 1)) for b in range(n)] + [const(float(shift[a]))])) for a in range(n)]
    Ainv = np.linalg.inv(A)
    corners = np.array(np.meshgrid(*sys.domain, indexing="ij")).reshape(n, -1).T
    pre = (corners - shift) @ Ainv.T
    domain = np.column_stack([pre.min(axis=0), pre.max(axis=0)])
    new = change_coordinates(sys, psi, domain)

    def to_new(x):
        return (np.asarray(x, dtype=float) - shift) @ Ainv.T

    return new, to_new
