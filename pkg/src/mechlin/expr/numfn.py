"""Tabulated univariate functions with an exact derivative."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .nodes import Expr


class NumericFunction:
    """A function known through cubic Hermite data.

    ``derivative`` is an expression in the dummy variable ``x1`` giving the
    exact derivative; the table slopes are sampled from it.
    """

    def __init__(self, name: str, knots, values, derivative: Expr, slopes=None):
        from .evaluate import evaluate
        from .simplify import simplify

        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise ValueError("knots and values must be matching 1-d arrays with at least two entries")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        self.name = name
        self.knots = knots
        self.values = values
        self.derivative = simplify(derivative)
        if slopes is None:
            slopes = evaluate(self.derivative, knots[:, None])
        self.slopes = np.asarray(slopes, dtype=float)
        self._spline = CubicHermiteSpline(knots, values, self.slopes, extrapolate=True)

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self._spline(s)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        lo, hi = self.domain
        return f"NumericFunction({self.name!r}, [{lo:g}, {hi:g}], {self.knots.size} knots)"
