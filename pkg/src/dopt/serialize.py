"""JSON forms of designs and certificates.

Floats are written with 17 significant digits so every double round-trips
exactly; output is UTF-8 with a fixed key order, so identical inputs give
identical bytes.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .instance import Design, ModelSpec
from .relax import DualCertificate


def _float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = "%.17g" % x
    # keep a decimal point so the value reads back as a float
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def loads(text: str):
    return json.loads(text)


def spec_from_dict(d: dict) -> ModelSpec:
    return ModelSpec(d["kind"], int(d["factors"]), int(d["levels"]))


def design_to_dict(design: Design, ldet: float) -> dict:
    return {
        "model": design.spec.to_dict(),
        "budget": design.budget,
        "support": [{"levels": list(p), "multiplicity": design.support[p]} for p in design.points()],
        "ldet": ldet,
    }


def design_from_dict(d: dict) -> Design:
    spec = spec_from_dict(d["model"])
    sup = {tuple(e["levels"]): int(e["multiplicity"]) for e in d["support"]}
    return Design(spec, int(d["budget"]), sup)


def certificate_to_dict(cert: DualCertificate, spec: ModelSpec) -> dict:
    return {
        "theta": [list(map(float, row)) for row in cert.theta],
        "tau": float(cert.tau),
        "scope": cert.scope,
        "bound": float(cert.upper_bound),
        "s": cert.s,
        "model": spec.to_dict(),
    }


def certificate_from_dict(d: dict):
    """Returns ``(certificate, spec)``."""
    theta = np.asarray(d["theta"], dtype=np.float64)
    cert = DualCertificate(theta, float(d["tau"]), d["s"], d.get("scope", "full"), float(d["bound"]))
    return cert, spec_from_dict(d["model"])
