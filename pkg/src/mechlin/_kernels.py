"""Fixed-step RK4 kernel, compiled with numba when available.

Set MECHLIN_NUMBA=0 to run the same kernel as plain Python/numpy.
"""

from __future__ import annotations

import math
import os

import numpy as np

OK, DOMAIN_EXIT, NON_FINITE, BETA_VANISHED = 0, 1, 2, 3


def _want_numba() -> bool:
    return os.environ.get("MECHLIN_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and _want_numba()


def jit(fn, use_numba=None):
    if use_numba is None:
        use_numba = numba_enabled()
    if use_numba:
        return numba.njit(cache=False, fastmath=False)(fn)
    return fn


def compile_rhs(source: str, name: str = "rhs", use_numba=None):
    """Compile generated rhs source into a (possibly jitted) function."""
    ns = {"math": math, "np": np}
    exec(compile(source, f"<mechlin-{name}>", "exec"), ns)
    return jit(ns[name], use_numba)


def make_rk4(rhs, n: int, use_numba=None):
    """Build the integrator for a compiled ``rhs(x, y, w, acc) -> (u, beta)``.

    The returned function takes (z0, w, dt, steps, lo, hi) where w holds the
    new input on the half-step grid t = i dt / 2, and returns
    (Z, U, status, step).  Z has steps+1 rows; on an error, rows after
    ``step`` are not meaningful.
    """

    def stage(z, w, acc, dz):
        u, beta = rhs(z[:n], z[n:], w, acc)
        for i in range(n):
            dz[i] = z[n + i]
            dz[n + i] = acc[i]
        return u, beta

    stage_c = jit(stage, use_numba)

    def rk4(z0, w, dt, steps, lo, hi):
        # beta may not vanish; a sign change between stages means it crossed zero
        m = 2 * n
        sign = 0.0
        Z = np.empty((steps + 1, m))
        U = np.empty(steps + 1)
        Z[0, :] = z0
        acc = np.empty(n)
        k1 = np.empty(m)
        k2 = np.empty(m)
        k3 = np.empty(m)
        k4 = np.empty(m)
        tmp = np.empty(m)
        half = 0.5 * dt
        for s in range(steps):
            z = Z[s]
            u, beta = stage_c(z, w[2 * s], acc, k1)
            U[s] = u
            if s == 0:
                sign = 1.0 if beta > 0 else -1.0
            if beta * sign <= 0.0 or not math.isfinite(beta):
                return Z, U, BETA_VANISHED, s
            for i in range(m):
                tmp[i] = z[i] + half * k1[i]
            u2, beta = stage_c(tmp, w[2 * s + 1], acc, k2)
            if beta * sign <= 0.0 or not math.isfinite(beta):
                return Z, U, BETA_VANISHED, s
            for i in range(m):
                tmp[i] = z[i] + half * k2[i]
            u3, beta = stage_c(tmp, w[2 * s + 1], acc, k3)
            if beta * sign <= 0.0 or not math.isfinite(beta):
                return Z, U, BETA_VANISHED, s
            for i in range(m):
                tmp[i] = z[i] + dt * k3[i]
            u4, beta = stage_c(tmp, w[2 * s + 2], acc, k4)
            if beta * sign <= 0.0 or not math.isfinite(beta):
                return Z, U, BETA_VANISHED, s
            for i in range(m):
                Z[s + 1, i] = z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(m):
                if not math.isfinite(Z[s + 1, i]):
                    return Z, U, NON_FINITE, s + 1
            for i in range(n):
                if Z[s + 1, i] < lo[i] or Z[s + 1, i] > hi[i]:
                    return Z, U, DOMAIN_EXIT, s + 1
        u, beta = stage_c(Z[steps], w[2 * steps], acc, k1)
        U[steps] = u
        if beta * sign <= 0.0 or not math.isfinite(beta):
            return Z, U, BETA_VANISHED, steps
        if not math.isfinite(u):
            return Z, U, NON_FINITE, steps
        return Z, U, OK, steps

    return jit(rk4, use_numba)
