"""Sampled tests of the MF-linearizability conditions.

Conditions are checked pointwise on quasi-random samples of the domain box.
A condition that fails on a small fraction of samples (or only at points found
by refinement near a singular set) is reported as "boundary".
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    MechanicalSystem,
    ad_sequence,
    evaluate_fields,
    second_covariant_derivative,
)
from .pointwise import (
    Tracked,
    bracket_at,
    connection_jet,
    covariant_at,
    field_jet,
    noise_level,
    second_covariant_at,
)
from .sampling import interior, sobol_points

DEFAULT_SEED = 20240917


def default_seed() -> int:
    env = os.environ.get("MECHLIN_SEED")
    return int(env) if env else DEFAULT_SEED


@dataclass(frozen=True)
class SamplingPlan:
    sample_count: int = 128
    seed: int = field(default_factory=default_seed)
    rank_tol: float = 1e-8
    membership_tol: float = 1e-8
    boundary_fraction: float = 0.05

    def __post_init__(self):
        if self.sample_count < 8:
            raise ValueError("sample_count must be at least 8")
        if not (self.rank_tol > 0 and self.membership_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 <= self.boundary_fraction < 1:
            raise ValueError("boundary_fraction must lie in [0, 1)")


@dataclass
class ConditionVerdict:
    condition: str
    status: str
    residual: float
    witness: Optional[list]
    samples_failed: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "status": self.status,
            "residual": float(self.residual),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "samples_failed": int(self.samples_failed),
        }

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class MFReport:
    verdicts: list
    overall: str
    excluded: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def verdict(self, condition: str) -> ConditionVerdict:
        for v in self.verdicts:
            if v.condition == condition:
                return v
        raise KeyError(condition)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "excluded": [[float(c) for c in p] for p in self.excluded],
            "notes": list(self.notes),
        }

    def statuses(self) -> dict:
        return {v.condition: v.status for v in self.verdicts}


# numeric primitives

def numerical_rank(vectors, tol: float = 1e-8) -> int:
    """Number of singular values above tol times the largest one."""
    M = np.atleast_2d(np.asarray(vectors, dtype=float))
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def membership_residual(v, D, rank_tol: float = 1e-8) -> float:
    """min_c ||v - sum c_k D_k|| / max(1, ||v||)."""
    v = np.asarray(v, dtype=float)
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return float(membership_residuals(v[None, :], D[None, :, :], rank_tol)[0])


def membership_residuals(V: np.ndarray, D: np.ndarray, rank_tol: float = 1e-8) -> np.ndarray:
    """Batched residuals: V is (m, n), D is (m, r, n)."""
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    smax = s[:, :1]
    keep = (s > rank_tol * np.where(smax > 0, smax, np.inf)).astype(float)
    coef = np.einsum("prn,pn->pr", Vt, V) * keep
    proj = np.einsum("pr,prn->pn", coef, Vt)
    res = np.linalg.norm(V - proj, axis=1)
    return res / np.maximum(1.0, np.linalg.norm(V, axis=1))


def rank_ratios(D: np.ndarray) -> np.ndarray:
    """sigma_min / sigma_max per sample for D of shape (m, r, n)."""
    s = np.linalg.svd(D, compute_uv=False)
    top = s[:, 0]
    return np.where(top > 0, s[:, -1] / np.where(top > 0, top, 1.0), 0.0)


def sample_points(sys: MechanicalSystem, plan: SamplingPlan) -> np.ndarray:
    return sobol_points(interior(sys.domain), plan.sample_count, plan.seed)


def _status(failed: int, total: int, plan: SamplingPlan) -> str:
    if failed == 0:
        return "pass"
    if failed <= plan.boundary_fraction * total:
        return "boundary"
    return "fail"


def _verdict(name, residuals, fail_mask, X, plan, note="") -> ConditionVerdict:
    residuals = np.asarray(residuals, dtype=float)
    valid = np.isfinite(residuals)
    worst = int(np.argmax(np.where(valid, residuals, -1.0))) if valid.any() else 0
    failed = int(np.sum(fail_mask))
    status = _status(failed, len(residuals), plan)
    if failed and not np.any(fail_mask[worst:worst + 1]):
        worst = int(np.flatnonzero(fail_mask)[0])
    r = float(residuals[worst]) if valid.any() else float("inf")
    return ConditionVerdict(name, status, r, X[worst].tolist(), failed, note)


# MF1

def _mf1_sigmas(sys, X):
    fields = ad_sequence(sys, sys.n - 1)
    s = np.linalg.svd(evaluate_fields(fields, X, sys.params), compute_uv=False)
    return s[:, 0], s[:, -1]


def _mf1_ratios(sys, X):
    top, low = _mf1_sigmas(sys, X)
    return np.where(top > 0, low / np.where(top > 0, top, 1.0), 0.0)


def _refine_rank_drop(sys, X, plan, rng):
    """Local random search for a point where rank E^{n-1} drops.

    The search minimizes the smallest singular value measured against the
    median largest one over the samples, so that points where the whole frame
    shrinks are preferred; the pointwise relative test then decides.
    """
    lo, hi = interior(sys.domain).T
    width = hi - lo
    top, low = _mf1_sigmas(sys, X)
    scale = float(np.median(top)) or 1.0
    best_pt, best_val = None, np.inf
    for start in np.argsort(low)[:3]:
        cur = X[start].copy()
        cur_val = low[start] / scale
        radius = 0.25 * width
        for _ in range(60):
            cand = np.clip(cur + rng.uniform(-1, 1, size=(32, sys.n)) * radius, lo, hi)
            vals = _mf1_sigmas(sys, cand)[1] / scale
            i = int(np.argmin(vals))
            if vals[i] < cur_val:
                cur, cur_val = cand[i], vals[i]
            radius = radius * 0.7
        ratio = float(_mf1_ratios(sys, cur[None, :])[0])
        if ratio < best_val:
            best_pt, best_val = cur, ratio
    return best_pt, best_val


def check_MF1(sys: MechanicalSystem, plan: SamplingPlan, points=None, refine: Optional[bool] = None,
              name: str = "MF1") -> ConditionVerdict:
    """rank E^{n-1} = n at the samples; refinement looks for nearby rank drops."""
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    refine = points is None if refine is None else refine
    ratios = _mf1_ratios(sys, X)
    fail = ratios <= plan.rank_tol
    deficiency = np.array([sys.n - numerical_rank_from_ratio(r, plan.rank_tol, sys.n) for r in ratios], float)
    v = _verdict(name, deficiency, fail, X, plan)
    if not fail.any():
        v.witness = X[int(np.argmin(ratios))].tolist()
    if refine and v.status == "pass":
        rng = np.random.default_rng(plan.seed)
        pt, val = _refine_rank_drop(sys, X, plan, rng)
        if pt is not None and val < plan.rank_tol:
            v.status = "boundary"
            v.residual = 1.0
            v.witness = pt.tolist()
            v.note = "rank drops near the witness; shrink the domain to exclude it"
    return v


def numerical_rank_from_ratio(ratio: float, tol: float, n: int) -> int:
    return n if ratio > tol else n - 1


def _mf1_ok(sys, X, plan):
    return _mf1_ratios(sys, X) > plan.rank_tol


# membership-type conditions

def _tracked_residuals(v: Tracked, D: np.ndarray, rank_tol: float) -> np.ndarray:
    """Membership residuals of v; those below the round-off level of v count as zero."""
    res = membership_residuals(v.val, D, rank_tol)
    absres = res * np.maximum(1.0, np.linalg.norm(v.val, axis=1))
    res = np.where(absres <= noise_level(v), 0.0, res)
    return np.where(np.isfinite(res), res, np.inf)


def _membership_verdict(name, v: Tracked, span, X, plan, ok_mask):
    D = np.stack([f.val for f in span], axis=1)
    res = _tracked_residuals(v, D, plan.rank_tol)
    fail = (res > plan.membership_tol) & ok_mask
    return _verdict(name, np.where(ok_mask, res, 0.0), fail, X, plan)


def _jets(sys, X, count, order=1):
    return [field_jet(F, X, sys.params, order) for F in ad_sequence(sys, count - 1)]


def check_MF2(sys: MechanicalSystem, plan: SamplingPlan, points=None) -> list:
    """E^i involutive with constant rank, 0 <= i <= n-2."""
    n = sys.n
    if n < 3:
        raise ValueError("MF2 applies to n >= 3")
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    ok = _mf1_ok(sys, X, plan)
    jets = _jets(sys, X, n - 1)
    out = []
    for i in range(n - 1):
        gens = [J.value for J in jets[: i + 1]]
        vals = np.stack([g.val for g in gens], axis=1)
        ranks = np.array([numerical_rank(vals[p], plan.rank_tol) for p in range(len(X))])
        ref = np.bincount(ranks[ok]).argmax() if ok.any() else i + 1
        rank_fail = (ranks != ref) & ok
        res = np.zeros(len(X))
        for a in range(i + 1):
            for b in range(a + 1, i + 1):
                br = bracket_at(jets[a], jets[b])
                res = np.maximum(res, _tracked_residuals(br, vals, plan.rank_tol))
        fail = ((res > plan.membership_tol) & ok) | rank_fail
        res = np.where(rank_fail, np.maximum(res, 1.0), np.where(ok, res, 0.0))
        out.append(_verdict(f"MF2[{i}]", res, fail, X, plan))
    return out


def check_MF3(sys: MechanicalSystem, plan: SamplingPlan, points=None, indices=None, prefix="MF3") -> list:
    """nabla_{ad^i g} g in E^0 for 0 <= i <= n-1."""
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    ok = _mf1_ok(sys, X, plan)
    jets = _jets(sys, X, sys.n)
    C = connection_jet(sys, X)
    idx = range(sys.n) if indices is None else indices
    g = jets[0]
    return [
        _membership_verdict(f"{prefix}[{i}]", covariant_at(C, jets[i].value, g), [g.value], X, plan, ok)
        for i in idx
    ]


def check_MF4(sys: MechanicalSystem, plan: SamplingPlan, points=None) -> list:
    """nabla^2_{ad^k g, ad^j g} e in E^1 for 0 <= k, j <= n-1."""
    n = sys.n
    if n < 3:
        raise ValueError("MF4 applies to n >= 3")
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    ok = _mf1_ok(sys, X, plan)
    jets = _jets(sys, X, n)
    C = connection_jet(sys, X)
    e = field_jet(sys.e, X, sys.params, order=2)
    span = [jets[0].value, jets[1].value]
    out = []
    for k in range(n):
        for j in range(n):
            v = second_covariant_at(C, jets[k], jets[j], e)
            out.append(_membership_verdict(f"MF4[{k},{j}]", v, span, X, plan, ok))
    return out


def mf5_field(sys: MechanicalSystem):
    """nabla^2_{g, ad g} ad g - nabla^2_{ad g, g} ad g (symbolic)."""
    g, adg = ad_sequence(sys, 1)
    return second_covariant_derivative(sys, g, adg, adg) - second_covariant_derivative(sys, adg, g, adg)


def mf5_at(sys: MechanicalSystem, X) -> Tracked:
    """The MF5' field assembled at the points X."""
    g, adg = ad_sequence(sys, 1)
    C = connection_jet(sys, X)
    gj = field_jet(g, X, sys.params, order=1)
    aj = field_jet(adg, X, sys.params, order=2)
    return second_covariant_at(C, gj, aj, aj) - second_covariant_at(C, aj, gj, aj)


def check_n2(sys: MechanicalSystem, plan: SamplingPlan, points=None, refine: Optional[bool] = None) -> list:
    """MF1', MF3' and MF5' for two degrees of freedom."""
    if sys.n != 2:
        raise ValueError("check_n2 needs n = 2")
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    refine = points is None if refine is None else refine
    mf1 = check_MF1(sys, plan, X, refine=refine, name="MF1'")
    ok = _mf1_ok(sys, X, plan)
    mf3 = check_MF3(sys, plan, X, indices=(0, 1), prefix="MF3'")
    mf3 = max(mf3, key=lambda v: (v.samples_failed, v.residual))
    mf3.condition = "MF3'"
    g = field_jet(sys.g, X, sys.params).value
    mf5 = _membership_verdict("MF5'", mf5_at(sys, X), [g], X, plan, ok)
    return [mf1, mf3, mf5]


def check_all(sys: MechanicalSystem, plan: Optional[SamplingPlan] = None, points=None) -> MFReport:
    """Dispatch on n and aggregate the verdicts."""
    plan = plan or SamplingPlan()
    if sys.n < 2:
        raise ValueError("n must be at least 2")
    X = sample_points(sys, plan) if points is None else np.atleast_2d(points)
    refine = points is None
    if sys.n == 2:
        verdicts = check_n2(sys, plan, X, refine=refine)
    else:
        verdicts = [check_MF1(sys, plan, X, refine=refine)]
        verdicts += check_MF2(sys, plan, X)
        verdicts += check_MF3(sys, plan, X)
        verdicts += check_MF4(sys, plan, X)
    statuses = {v.status for v in verdicts}
    if statuses == {"pass"}:
        overall = "linearizable"
    elif "fail" in statuses:
        overall = "not_linearizable"
    else:
        overall = "inconclusive"
    excluded = []
    notes = ["conditions are checked on samples of the given domain box only; the box is the user's choice"]
    mf1 = verdicts[0]
    if mf1.status != "pass" and mf1.witness is not None:
        excluded.append(mf1.witness)
        notes.append(f"{mf1.condition} rank drop near {np.round(mf1.witness, 6).tolist()}")
    return MFReport(verdicts, overall, excluded, notes)
