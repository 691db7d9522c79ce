"""Closed-loop simulation and the trajectory-correspondence check."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .expr import Const, evaluate_many
from .expr.codegen import CodeGen, NotCompilable
from .geometry import MechanicalSystem


class IntegrationError(RuntimeError):
    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = float(t)
        self.state = np.asarray(state, dtype=float)


class DomainExit(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


class BetaVanished(IntegrationError):
    pass


# control signals

class ControlSignal:
    """The new input as a function of time."""

    def __call__(self, t):
        raise NotImplementedError

    def sample(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self(t), dtype=float) * np.ones_like(t)


class ZeroSignal(ControlSignal):
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def __repr__(self):
        return "zero"


class SineSignal(ControlSignal):
    def __init__(self, amplitude: float, omega: float):
        self.amplitude = float(amplitude)
        self.omega = float(omega)

    def __call__(self, t):
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float))

    def __repr__(self):
        return f"sin:{self.amplitude:g},{self.omega:g}"


class TableSignal(ControlSignal):
    """Piecewise-cubic interpolation of tabulated (t, value) pairs."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("a table signal needs at least two (t, u) rows")
        if np.any(np.diff(times) <= 0):
            raise ValueError("table times must be strictly increasing")
        self.times = times
        self._spline = CubicSpline(times, values)

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValueError(f"table signal is defined on [{lo:g}, {hi:g}] only")
        return self._spline(t)


class FunctionSignal(ControlSignal):
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, t):
        return np.vectorize(self.fn, otypes=[float])(np.asarray(t, dtype=float))


def parse_signal(text: str) -> ControlSignal:
    """``zero``, ``sin:a,w`` or the path of a two-column CSV table."""
    text = text.strip()
    if text == "zero":
        return ZeroSignal()
    if text.startswith("sin:"):
        try:
            a, w = (float(v) for v in text[4:].split(","))
        except ValueError:
            raise ValueError(f"malformed sine signal {text!r}; expected sin:a,w") from None
        return SineSignal(a, w)
    rows = []
    with open(text, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ValueError(f"bad row in signal table: {row}") from None
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or len(arr) < 2:
        raise ValueError("signal table needs at least two rows")
    return TableSignal(arr[:, 0], arr[:, 1])


class ClosedLoop:
    """u = gamma_jk y^j y^k + alpha + beta utilde, evaluated along the state."""

    def __init__(self, feedback, utilde: ControlSignal):
        self.feedback = feedback
        self.utilde = utilde


def closed_loop(feedback, utilde: ControlSignal) -> ClosedLoop:
    return ClosedLoop(feedback, utilde)


# code generation

def rhs_source(sys: MechanicalSystem, feedback=None, name: str = "rhs") -> str:
    """Python source for ``rhs(x, y, w, acc) -> (u, beta)``."""
    n = sys.n
    cg = CodeGen(sys.params)
    lines = [f"def {name}(x, y, w, acc):"]
    if feedback is None:
        u_expr, beta_expr = "w", "1.0"
    else:
        quad = []
        for j in range(n):
            for k in range(j, n):
                gjk = feedback.gamma[j][k]
                if isinstance(gjk, Const) and gjk.value == 0:
                    continue
                c = "" if j == k else "2.0 * "
                quad.append(f"{c}{cg.emit(gjk)} * y[{j}] * y[{k}]")
        alpha = cg.emit(feedback.alpha)
        beta_expr = cg.emit(feedback.beta)
        u_expr = " + ".join(quad + [alpha, f"{beta_expr} * w"])
    acc_terms = [[] for _ in range(n)]
    for (i, j, k), gv in sys.gamma_items():
        c = "" if j == k else "2.0 * "
        acc_terms[i - 1].append(f"- {c}{cg.emit(gv)} * y[{j - 1}] * y[{k - 1}]")
    e_names = [cg.emit(c) for c in sys.e]
    g_names = [cg.emit(c) for c in sys.g]
    body = list(cg.lines)
    body.append(f"u = {u_expr}")
    for i in range(n):
        body.append(f"acc[{i}] = {e_names[i]} + {g_names[i]} * u " + " ".join(acc_terms[i]))
    body.append(f"return u, {beta_expr}")
    return "\n".join(lines + ["    " + b for b in body]) + "\n"


def _interpreted_rhs(sys: MechanicalSystem, feedback):
    """Slow path for expressions code generation cannot handle (tabulated functions)."""
    n = sys.n
    items = sys.gamma_items()
    exprs = [v for _, v in items] + list(sys.e) + list(sys.g)
    if feedback is not None:
        exprs += [feedback.alpha, feedback.beta] + [feedback.gamma[j][k] for j in range(n) for k in range(n)]
    idx = [(i - 1, j - 1, k - 1) for (i, j, k), _ in items]
    ng = len(items)

    def rhs(x, y, w, acc):
        v = [float(a) for a in evaluate_many(exprs, np.asarray(x, dtype=float)[None, :], sys.params)]
        if feedback is None:
            u, beta = w, 1.0
        else:
            a, beta = v[ng + 2 * n], v[ng + 2 * n + 1]
            G = np.reshape(v[ng + 2 * n + 2:], (n, n))
            u = float(y @ G @ y) + a + beta * w
        for i in range(n):
            acc[i] = v[ng + i] + v[ng + n + i] * u
        for t, (i, j, k) in enumerate(idx):
            acc[i] -= (1.0 if j == k else 2.0) * v[t] * y[j] * y[k]
        return u, beta

    return rhs


def _integrator(sys: MechanicalSystem, feedback, use_numba):
    key = ("rk4", id(feedback), bool(use_numba))

    def build():
        try:
            rhs = _kernels.compile_rhs(rhs_source(sys, feedback), use_numba=use_numba)
            jit = use_numba
        except NotCompilable:
            rhs, jit = _interpreted_rhs(sys, feedback), False
        return _kernels.make_rk4(rhs, sys.n, use_numba=jit), feedback

    return sys.memo(key, build)[0]


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    utilde: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def states(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    def to_csv(self, path) -> None:
        write_csv(path, self)


def write_csv(path, traj: Trajectory) -> None:
    n = traj.x.shape[1]
    header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)] + ["u"]
    data = np.column_stack([traj.times, traj.x, traj.y, traj.u])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _grid(T: float, dt: float) -> int:
    if not (dt > 0 and np.isfinite(dt)):
        raise ValueError("dt must be positive")
    if not (T >= dt):
        raise ValueError("T must be at least dt")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    return steps


def integrate(sys: MechanicalSystem, z0, u, T: float, dt: float, use_numba: Optional[bool] = None,
              check_start: bool = True) -> Trajectory:
    """Classical RK4 on xdot = y, ydot = -Gamma(y, y) + e + g u.

    ``u`` is a ControlSignal (open loop) or a ClosedLoop.  Leaving the domain
    box raises DomainExit.
    """
    n = sys.n
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.shape != (2 * n,):
        raise ValueError(f"z0 must have {2 * n} entries (x then y)")
    steps = _grid(T, dt)
    lo = np.ascontiguousarray(sys.domain[:, 0])
    hi = np.ascontiguousarray(sys.domain[:, 1])
    if check_start and (np.any(z0[:n] < lo) or np.any(z0[:n] > hi)):
        raise DomainExit("initial configuration lies outside the domain box", 0.0, z0)
    if use_numba is None:
        use_numba = _kernels.numba_enabled()
    if isinstance(u, ClosedLoop):
        feedback, signal = u.feedback, u.utilde
    else:
        feedback, signal = None, u
    half_t = np.arange(2 * steps + 1) * (0.5 * dt)
    w = np.ascontiguousarray(signal.sample(half_t), dtype=float)
    rk4 = _integrator(sys, feedback, use_numba)
    Z, U, status, step = rk4(z0, w, float(dt), steps, lo, hi)
    times = np.arange(steps + 1) * dt
    if status != _kernels.OK:
        t = times[min(step, steps)]
        state = Z[min(step, steps)]
        if status == _kernels.DOMAIN_EXIT:
            raise DomainExit(f"trajectory left the domain box at t={t:g}", t, state)
        if status == _kernels.NON_FINITE:
            raise NonFiniteState(f"non-finite state at t={t:g}", t, state)
        raise BetaVanished(f"beta vanished at t={t:g}", t, state[:n])
    return Trajectory(times, Z[:, :n].copy(), Z[:, n:].copy(), U, w[::2].copy())


def linear_system(model, n: int, name: str = "linear") -> MechanicalSystem:
    """The linear mechanical system ydot = E x + b u as a MechanicalSystem on all of R^n."""
    from .expr import Var, add, mul
    from .expr.simplify import const

    E = np.asarray(model.E, dtype=float)
    e = [add(*[mul(const(float(E[i, j])), Var(j + 1)) for j in range(n) if E[i, j] != 0] or [const(0)])
         for i in range(n)]
    g = [const(float(v)) for v in model.b]
    dom = np.tile([-np.inf, np.inf], (n, 1))
    return MechanicalSystem(n, {}, e, g, dom, {}, name)


@dataclass
class Correspondence:
    error: float
    config_error: float
    original: Trajectory
    linear: Trajectory
    mapped: np.ndarray


def correspondence(sys: MechanicalSystem, model, diffeo, feedback, z0, utilde: ControlSignal, T: float,
                   dt: float, use_numba: Optional[bool] = None) -> Correspondence:
    """Integrate the closed loop from z0 and the linear model from Phi(z0); compare along the grid."""
    n = sys.n
    z0 = np.asarray(z0, dtype=float)
    orig = integrate(sys, z0, closed_loop(feedback, utilde), T, dt, use_numba)
    xt0, yt0 = diffeo.lift(z0[:n], z0[n:], sys.params)
    lin_sys = sys.memo(("linear", id(model)), lambda: linear_system(model, n))
    lin = integrate(lin_sys, np.concatenate([xt0[0], yt0[0]]), utilde, T, dt, use_numba)
    mx, my = diffeo.lift(orig.x, orig.y, sys.params)
    mapped = np.hstack([mx, my])
    diff = np.abs(mapped - lin.states)
    return Correspondence(float(np.max(diff)), float(np.max(diff[:, :n])), orig, lin, mapped)


def correspondence_error(sys, model, diffeo, feedback, z0, utilde, T, dt, use_numba=None) -> float:
    return correspondence(sys, model, diffeo, feedback, z0, utilde, T, dt, use_numba).error
