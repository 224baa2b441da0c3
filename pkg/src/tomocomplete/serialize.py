"""JSON schemas for matrices, measurements, and records.

Matrices travel as ``{"dim": d, "re": [...], "im": [...]}`` with row-major
value arrays; readers verify Hermiticity on load.  A measurement file
carries its POVM blocks plus, for element-probing constructions, the
pattern and the sparse extraction map, so a loaded file is usable without
re-running the constructor.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .linalg import as_hermitian
from .patterns import ElementPattern
from .povm import EpPovm, Extractor, MeasurementRecord, Povm


def matrix_to_obj(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "dim": int(m.shape[0]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def matrix_from_obj(obj: dict, hermitian: bool = True) -> np.ndarray:
    d = int(obj["dim"])
    m = (np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float))
    m = m.reshape(d, d)
    return as_hermitian(m, tol=1e-9) if hermitian else m


def record_to_obj(rec: MeasurementRecord) -> dict:
    return {
        "probs": [float(p) for p in rec.probs],
        "shots": None if rec.shots is None else int(rec.shots),
    }


def record_from_obj(obj: dict) -> MeasurementRecord:
    shots = obj.get("shots")
    return MeasurementRecord(
        np.asarray(obj["probs"], dtype=float),
        shots=None if shots is None else int(shots),
    )


def _extractor_to_obj(ex: Extractor) -> dict:
    terms = []
    for (i, j), coeffs in sorted(ex.terms.items()):
        const = complex(ex.consts.get((i, j), 0.0))
        terms.append(
            {
                "row": int(i),
                "col": int(j),
                "coeffs": [[int(mu), float(c.real), float(c.imag)] for mu, c in coeffs],
                "const": [float(const.real), float(const.imag)],
            }
        )
    return {"terms": terms}


def _extractor_from_obj(obj: dict) -> Extractor:
    terms = {}
    consts = {}
    for entry in obj["terms"]:
        key = (int(entry["row"]), int(entry["col"]))
        terms[key] = tuple(
            (int(mu), complex(re, im)) for mu, re, im in entry["coeffs"]
        )
        re, im = entry["const"]
        consts[key] = complex(re, im)
    return Extractor(terms, consts)


def povm_to_obj(povm_or_ep) -> dict:
    """Serialize an EpPovm (or a bare Povm as kind "custom")."""
    if isinstance(povm_or_ep, Povm):
        return {
            "kind": "custom",
            "params": {},
            "dim": povm_or_ep.dim,
            "blocks": [[matrix_to_obj(e) for e in povm_or_ep.effects]],
            "pattern": None,
            "extractor": None,
        }
    ep: EpPovm = povm_or_ep
    return {
        "kind": ep.kind,
        "params": ep.params,
        "dim": ep.dim,
        "blocks": [[matrix_to_obj(e) for e in p.effects] for p in ep.povms],
        "pattern": sorted([int(i), int(j)] for i, j in ep.pattern.indices),
        "extractor": _extractor_to_obj(ep.extractor),
    }


def povm_from_obj(obj: dict):
    """Load a measurement file; EpPovm when the probing data is present,
    otherwise the list of POVM blocks."""
    povms = tuple(
        Povm([matrix_from_obj(e) for e in block]) for block in obj["blocks"]
    )
    if obj.get("pattern") is None or obj.get("extractor") is None:
        return list(povms)
    pattern = ElementPattern.from_pairs(int(obj["dim"]), [tuple(p) for p in obj["pattern"]])
    return EpPovm(
        povms=povms,
        pattern=pattern,
        extractor=_extractor_from_obj(obj["extractor"]),
        kind=obj.get("kind", "custom"),
        params=obj.get("params", {}),
    )


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def save_matrix(m, path) -> None:
    dump_json(matrix_to_obj(m), path)


def load_matrix(path, hermitian: bool = True) -> np.ndarray:
    return matrix_from_obj(load_json(path), hermitian=hermitian)


def save_povm(povm_or_ep, path) -> None:
    dump_json(povm_to_obj(povm_or_ep), path)


def load_povm(path):
    return povm_from_obj(load_json(path))


def save_record(rec: MeasurementRecord, path) -> None:
    dump_json(record_to_obj(rec), path)


def load_record(path) -> MeasurementRecord:
    return record_from_obj(load_json(path))
