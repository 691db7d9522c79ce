"""System files (JSON) and their validation."""

from __future__ import annotations

import hashlib
import json
import os
from importlib import resources
from typing import Union

import numpy as np

from .expr import ParseError, parse
from .geometry import MechanicalSystem


class SystemFileError(ValueError):
    """A system file that cannot be read or does not validate."""


BUILTIN = ("example1", "iwp", "tora3", "tora3_full", "nonseparable")


def builtin_path(name: str):
    return resources.files("mechlin") / "systems" / f"{name}.json"


def read_system_text(source: str) -> str:
    """File contents for a path, or for the name of a shipped system."""
    if os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if source in BUILTIN:
        return builtin_path(source).read_text(encoding="utf-8")
    raise SystemFileError(f"no such file or shipped system: {source}")


def load_system(source: Union[str, dict]) -> MechanicalSystem:
    """Load a system from a path, a shipped system name, or an already-decoded dict."""
    if isinstance(source, dict):
        return system_from_dict(source)
    text = read_system_text(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFileError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return system_from_dict(data, origin=str(source))


def _require(data, key, kind, origin):
    if key not in data:
        raise SystemFileError(f"{origin}: missing field {key!r}")
    val = data[key]
    if not isinstance(val, kind):
        raise SystemFileError(f"{origin}: field {key!r} has the wrong type")
    return val


def _parse_field(text, n, params, where, origin):
    if not isinstance(text, str):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(text)
        else:
            raise SystemFileError(f"{origin}: {where}: expected an expression string")
    try:
        return parse(text, n=n, params=params)
    except ParseError as exc:
        raise SystemFileError(f"{origin}: {where}: {exc}") from None


def system_from_dict(data: dict, origin: str = "<system>") -> MechanicalSystem:
    if not isinstance(data, dict):
        raise SystemFileError(f"{origin}: top level must be a JSON object")
    n = _require(data, "n", int, origin)
    if isinstance(n, bool) or n < 2:
        raise SystemFileError(f"{origin}: n must be an integer >= 2")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise SystemFileError(f"{origin}: params must be an object")
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SystemFileError(f"{origin}: parameter {k!r} must be a number")
        if parse_identifier_clash(k):
            raise SystemFileError(f"{origin}: parameter name {k!r} is not allowed")
    names = list(params)
    gamma = {}
    for idx, entry in enumerate(data.get("gamma", [])):
        where = f"gamma[{idx}]"
        if not isinstance(entry, dict) or not {"i", "j", "k", "expr"} <= entry.keys():
            raise SystemFileError(f"{origin}: {where} needs i, j, k and expr")
        i, j, k = entry["i"], entry["j"], entry["k"]
        if not all(isinstance(v, int) and 1 <= v <= n for v in (i, j, k)):
            raise SystemFileError(f"{origin}: {where}: indices must be integers in 1..{n}")
        if j > k:
            raise SystemFileError(f"{origin}: {where}: entries are stored with j <= k")
        if (i, j, k) in gamma:
            raise SystemFileError(f"{origin}: {where}: duplicate entry ({i}, {j}, {k})")
        gamma[(i, j, k)] = _parse_field(entry["expr"], n, names, where, origin)
    fields = {}
    for key in ("e", "g"):
        vals = _require(data, key, list, origin)
        if len(vals) != n:
            raise SystemFileError(f"{origin}: {key} must have {n} entries")
        fields[key] = [_parse_field(v, n, names, f"{key}[{i}]", origin) for i, v in enumerate(vals)]
    domain = data.get("domain")
    if domain is None:
        domain = [[-1.0, 1.0]] * n
    try:
        dom = np.array(domain, dtype=float)
    except (TypeError, ValueError):
        raise SystemFileError(f"{origin}: domain must be a list of [lo, hi] pairs") from None
    if dom.shape != (n, 2) or not np.all(dom[:, 0] < dom[:, 1]):
        raise SystemFileError(f"{origin}: domain must be {n} pairs with lo < hi")
    try:
        sys = MechanicalSystem(n, gamma, fields["e"], fields["g"], dom, params, name=str(data.get("name", "")))
    except ValueError as exc:
        raise SystemFileError(f"{origin}: {exc}") from None
    return sys


def parse_identifier_clash(name: str) -> bool:
    import re

    return bool(re.fullmatch(r"x\d+", name)) or name in ("sin", "cos", "exp", "ln") or not re.fullmatch(
        r"[A-Za-z][A-Za-z0-9_]*", name
    )


def system_to_dict(sys: MechanicalSystem) -> dict:
    return {
        "name": sys.name,
        "n": sys.n,
        "params": dict(sys.params),
        "gamma": [{"i": i, "j": j, "k": k, "expr": str(v)} for (i, j, k), v in sys.gamma_items()],
        "e": [str(c) for c in sys.e],
        "g": [str(c) for c in sys.g],
        "domain": sys.domain.tolist(),
    }


def system_hash(sys: MechanicalSystem) -> str:
    """Stable digest of the canonical system data."""
    blob = json.dumps(system_to_dict(sys), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# transformation artifacts

ARTIFACT_FORMAT = "mechlin-artifact"
ARTIFACT_VERSION = 1


class ArtifactError(ValueError):
    """An artifact that cannot be read."""


class ArtifactMismatch(ArtifactError):
    """An artifact built for a different system."""


def _function_tables(exprs) -> dict:
    from .expr import numfns, to_string

    tables = {}
    for e in exprs:
        for name, fn in numfns(e).items():
            tables[name] = {
                "kind": "cubic_hermite",
                "knots": fn.knots.tolist(),
                "values": fn.values.tolist(),
                "slopes": fn.slopes.tolist(),
                "derivative": to_string(fn.derivative),
            }
    return tables


def artifact_to_dict(sys: MechanicalSystem, tr) -> dict:
    """Serializable form of a Transformation built for ``sys``."""
    from .expr import to_string

    n = sys.n
    fb = tr.feedback
    exprs = [tr.output.h, *tr.diffeo.phi, fb.alpha, fb.beta] + [fb.gamma[j][k] for j in range(n) for k in range(n)]
    corr = None
    if tr.correction is not None:
        corr = {
            "lambda": to_string(tr.correction.lam),
            "h0": to_string(tr.correction.h0),
            "H": to_string(tr.correction.H),
            "numeric": bool(tr.correction.numeric),
        }
        exprs.append(tr.correction.H)
    m = tr.model
    return {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "system_hash": system_hash(sys),
        "system": system_to_dict(sys),
        "h": to_string(tr.output.h),
        "phi": [to_string(p) for p in tr.diffeo.phi],
        "feedback": {
            "alpha": to_string(fb.alpha),
            "beta": to_string(fb.beta),
            "gamma": [[to_string(fb.gamma[j][k]) for k in range(n)] for j in range(n)],
        },
        "model": {
            "E": np.asarray(m.E, dtype=float).tolist(),
            "b": np.asarray(m.b, dtype=float).tolist(),
            "shift": np.asarray(m.shift, dtype=float).tolist(),
            "offset": np.asarray(m.offset, dtype=float).tolist(),
            "residual": float(m.residual),
            "gamma_residual": float(m.gamma_residual),
            "controllability_indices": m.controllability_indices(),
        },
        "lambda_correction": corr,
        "functions": _function_tables(exprs),
        "diagnostics": {
            "output_residuals": [float(r) for r in tr.output.residuals],
            "transversality_margin": float(tr.output.margin),
            "notes": list(tr.notes),
        },
    }


def write_artifact(path, sys: MechanicalSystem, tr) -> dict:
    data = artifact_to_dict(sys, tr)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    return data


def _load_functions(tables) -> dict:
    from .expr import NumericFunction

    out = {}
    for name, t in tables.items():
        if t.get("kind") != "cubic_hermite":
            raise ArtifactError(f"function {name!r}: unsupported kind {t.get('kind')!r}")
        deriv = parse(t["derivative"], n=1)
        out[name] = NumericFunction(name, t["knots"], t["values"], deriv, t.get("slopes"))
    return out


def artifact_from_dict(data: dict, sys: MechanicalSystem):
    """Rebuild the Transformation; the recorded system hash must match ``sys``."""
    from .synthesis import (
        LambdaCorrection,
        LinearizingOutput,
        LinearModel,
        MechanicalFeedback,
        Transformation,
        diffeo_from_phi,
    )

    if not isinstance(data, dict) or data.get("format") != ARTIFACT_FORMAT:
        raise ArtifactError("not a transformation artifact")
    if data.get("system_hash") != system_hash(sys):
        raise ArtifactMismatch("artifact was built for a different system (hash mismatch)")
    n = sys.n
    try:
        fns = _load_functions(data.get("functions", {}))
        p = lambda s: parse(s, n=n, params=set(sys.params), functions=fns)
        h = p(data["h"])
        diffeo = diffeo_from_phi([p(s) for s in data["phi"]])
        fb = data["feedback"]
        gamma = [[p(fb["gamma"][j][k]) for k in range(n)] for j in range(n)]
        feedback = MechanicalFeedback(p(fb["alpha"]), p(fb["beta"]), gamma)
        m = data["model"]
        model = LinearModel(np.array(m["E"], dtype=float), np.array(m["b"], dtype=float), float(m["residual"]),
                            np.array(m["offset"], dtype=float), np.array(m["shift"], dtype=float),
                            float(m.get("gamma_residual", 0.0)))
        corr = None
        c = data.get("lambda_correction")
        if c:
            corr = LambdaCorrection(parse(c["lambda"], n=1), p(c["h0"]),
                                    parse(c["H"], n=1, functions=fns), bool(c["numeric"]))
        diag = data.get("diagnostics", {})
        output = LinearizingOutput(h, diag.get("output_residuals", []), diag.get("transversality_margin", float("nan")))
    except (KeyError, IndexError, TypeError, ParseError) as exc:
        raise ArtifactError(f"malformed artifact: {exc}") from None
    return Transformation(output, diffeo, feedback, model, corr, list(diag.get("notes", [])))


def read_artifact(path, sys: MechanicalSystem):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ArtifactError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return artifact_from_dict(data, sys)
