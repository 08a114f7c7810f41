"""JSON ensemble specs: ``{rho, gamma, p1, p2, [p3], omega, phi, [k]}``.

``omega`` and ``phi`` map degree (as a string or int) to weight; weights are
normalized on load.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Union

from .codec import CodeEnsemble, EnsembleError
from .degree import DegreeError, new_distribution

SPEC_FORMAT_VERSION = 1
P_SUM_SLACK = 1e-9


class SpecError(ValueError):
    """A spec document that does not describe a valid ensemble."""


def ensemble_from_dict(doc: Mapping[str, Any]) -> CodeEnsemble:
    missing = [key for key in ("rho", "gamma", "p1", "p2", "omega", "phi") if key not in doc]
    if missing:
        raise SpecError(f"spec is missing field(s): {', '.join(missing)}")
    try:
        p1, p2 = float(doc["p1"]), float(doc["p2"])
        if p1 + p2 > 1.0 + P_SUM_SLACK:
            raise SpecError(f"p1 + p2 = {p1 + p2:.12g} exceeds 1")
        p3 = doc.get("p3")
        if p1 + p2 > 1.0:
            # within slack: put the pair back on the simplex
            total = p1 + p2
            p1, p2, p3 = p1 / total, p2 / total, None
        k = doc.get("k")
        return CodeEnsemble(
            rho=float(doc["rho"]),
            omega=new_distribution(doc["omega"]),
            phi=new_distribution(doc["phi"]),
            p1=p1,
            p2=p2,
            gamma=float(doc["gamma"]),
            k=None if k is None else int(k),
            p3=None if p3 is None else float(p3),
        )
    except (DegreeError, EnsembleError) as exc:
        raise SpecError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed spec: {exc}") from exc


def ensemble_to_dict(ensemble: CodeEnsemble) -> dict:
    doc = {
        "rho": ensemble.rho,
        "gamma": ensemble.gamma,
        "p1": ensemble.p1,
        "p2": ensemble.p2,
        "p3": ensemble.p3,
        "omega": {str(d): p for d, p in ensemble.omega.as_dict().items()},
        "phi": {str(d): p for d, p in ensemble.phi.as_dict().items()},
    }
    if ensemble.k is not None:
        doc["k"] = ensemble.k
    return doc


def load_spec(path: Union[str, Path]) -> CodeEnsemble:
    """Read a spec file; raises ``OSError`` on I/O and :class:`SpecError` on content."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: spec must be a JSON object")
    return ensemble_from_dict(doc)


def bundled_spec(name: str) -> CodeEnsemble:
    """Load one of the specs shipped in ``durateless/data``."""
    text = resources.files("durateless").joinpath("data", f"{name}.json").read_text()
    return ensemble_from_dict(json.loads(text))


def published_code() -> CodeEnsemble:
    """The rho = 1, eta = 10 design point with its printed coefficients normalized."""
    return bundled_spec("published_rho1_eta10")
