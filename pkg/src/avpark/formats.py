"""Canonical text formats for instances, assignments and generator configs.

All documents are JSON with a ``format``/``version`` header and a fixed key
order, so writing the same object twice gives identical bytes.  Floats are
written with ``repr`` and round-trip exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError
from .instance import (AvSpec, DistanceMatrix, FacilitySpec, GeneratorConfig, Instance,
                       TimeHorizon, TravelPlan)
from .model import Assignment

VERSION = 1
INSTANCE_FORMAT = "avpark-instance"
ASSIGNMENT_FORMAT = "avpark-assignment"
GENERATOR_FORMAT = "avpark-generator"

_AV_FIELDS = [f.name for f in fields(AvSpec)]
_FAC_FIELDS = [f.name for f in fields(FacilitySpec)]
_PLAN_FIELDS = ["m_to", "m_back", "e_to", "e_back", "m_stay"]


def _plain(x):
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _dump(obj, indent: int = 0) -> str:
    """JSON with one line per dict entry or nested row; scalar lists stay inline."""
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        items = [pad + _dump(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    return json.dumps(obj)


def _header(kind: str) -> dict:
    return {"format": kind, "version": VERSION}


def _check_header(doc: dict, kind: str) -> None:
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise InvalidConfigError(f"not an {kind} document")
    if doc.get("version") != VERSION:
        raise InvalidConfigError(f"unsupported {kind} version {doc.get('version')!r}")


def _loads(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"malformed document: {exc}") from exc


def instance_to_text(inst: Instance) -> str:
    doc = _header(INSTANCE_FORMAT)
    doc["seed"] = inst.rng_seed
    doc["travel_mode"] = inst.travel_mode
    doc["horizon"] = {"D": inst.horizon.D, "slot_minutes": inst.horizon.slot_minutes}
    dist = inst.distances
    if dist.coords is not None:
        doc["nodes"] = {"metric": "euclidean", "coords": _plain(dist.coords)}
    else:
        doc["nodes"] = {"metric": "explicit", "distances": _plain(dist.d)}
    doc["avs"] = [{k: _plain(v) for k, v in asdict(av).items()} for av in inst.avs]
    doc["facilities"] = [{k: _plain(v) for k, v in asdict(f).items()} for f in inst.facilities]
    doc["plans"] = {name: _plain(getattr(inst.plans, name)) for name in _PLAN_FIELDS}
    return _dump(doc) + "\n"


def instance_from_text(text: str) -> Instance:
    doc = _loads(text)
    _check_header(doc, INSTANCE_FORMAT)
    try:
        horizon = TimeHorizon(int(doc["horizon"]["D"]), float(doc["horizon"]["slot_minutes"]))
        nodes = doc["nodes"]
        if nodes["metric"] == "euclidean":
            distances = DistanceMatrix.euclidean(np.array(nodes["coords"], dtype=float))
        elif nodes["metric"] == "explicit":
            distances = DistanceMatrix(np.array(nodes["distances"], dtype=float))
        else:
            raise InvalidConfigError(f"unknown metric {nodes['metric']!r}")
        avs = [AvSpec(**{k: row[k] for k in _AV_FIELDS}) for row in doc["avs"]]
        facs = [FacilitySpec(**{k: row[k] for k in _FAC_FIELDS}) for row in doc["facilities"]]
        K, F = len(avs), len(facs)
        tables = []
        for name in _PLAN_FIELDS:
            arr = np.array(doc["plans"][name], dtype=float if name.startswith("e_") else int)
            tables.append(arr.reshape(K, F))
        plans = TravelPlan(*tables)
        return Instance(horizon, distances, avs, facs, plans, doc.get("seed"),
                        doc.get("travel_mode", "per-facility"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfigError):
            raise
        raise InvalidConfigError(f"malformed instance document: {exc!r}") from exc


def assignment_to_text(a: Assignment, extra: dict | None = None) -> str:
    doc = _header(ASSIGNMENT_FORMAT)
    doc["n_avs"] = a.n_avs
    doc["facility"] = list(a.facility)
    doc["slots"] = [list(s) for s in a.slots]
    if extra:
        doc.update(extra)
    return _dump(doc) + "\n"


def assignment_from_text(text: str) -> Assignment:
    doc = _loads(text)
    _check_header(doc, ASSIGNMENT_FORMAT)
    try:
        a = Assignment(tuple(doc["facility"]), tuple(tuple(s) for s in doc["slots"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfigError(f"malformed assignment document: {exc!r}") from exc
    if a.n_avs != doc.get("n_avs", a.n_avs):
        raise InvalidConfigError("assignment n_avs does not match its rows")
    return a


def config_to_text(cfg: GeneratorConfig) -> str:
    doc = _header(GENERATOR_FORMAT)
    doc.update({k: _plain(v) for k, v in asdict(cfg).items()})
    return _dump(doc) + "\n"


def config_from_dict(doc: dict) -> GeneratorConfig:
    known = {f.name for f in fields(GeneratorConfig)}
    body = {k: v for k, v in doc.items() if k not in ("format", "version")}
    unknown = set(body) - known
    if unknown:
        raise InvalidConfigError(f"unknown generator keys: {sorted(unknown)}")
    try:
        return GeneratorConfig(**body)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from exc


def config_from_text(text: str) -> GeneratorConfig:
    doc = _loads(text)
    _check_header(doc, GENERATOR_FORMAT)
    return config_from_dict(doc)


def read_instance(path) -> Instance:
    return instance_from_text(Path(path).read_text())


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(instance_to_text(inst))


def read_assignment(path) -> Assignment:
    return assignment_from_text(Path(path).read_text())


def write_assignment(a: Assignment, path, extra: dict | None = None) -> None:
    Path(path).write_text(assignment_to_text(a, extra))
