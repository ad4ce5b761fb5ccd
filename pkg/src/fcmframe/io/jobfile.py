"""YAML job files: schema, validation and conversion to a ``TwoScaleJob``.

Every physical quantity carries its unit in the key name (``_mm``, ``_N``,
``_Nmm``, ``_MPa``, ``_mm2``, ``_mm4``). Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ..beam import (
    CrossSection,
    FrameModel,
    section_circular,
    section_hollow_circular,
)
from ..condense import FcmParameters, SubstructureSpec
from ..geometry.domain import DOF_ORDER, Domain, InterfaceSection
from ..geometry.implicit import shape_from_dict
from ..geometry.stl import load_triangle_surface
from ..material import Material
from ..twoscale import Substructure, TwoScaleJob
from .matrix_text import read_condensed

__all__ = ["JOB_SCHEMA", "JobFileError", "JobDocument", "load_job", "parse_job", "build_job"]

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pos = {"type": "number", "exclusiveMinimum": 0}
_name = {"type": ["string", "integer"]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SHAPE = {
    "$id": "#shape",
    "oneOf": [
        _obj({"sphere": _obj({"center_mm": _vec3, "radius_mm": _pos},
                             ["center_mm", "radius_mm"])}, ["sphere"]),
        _obj({"cylinder": _obj({"start_mm": _vec3, "end_mm": _vec3, "radius_mm": _pos},
                               ["start_mm", "end_mm", "radius_mm"])}, ["cylinder"]),
        _obj({"hollow_cylinder": _obj({"start_mm": _vec3, "end_mm": _vec3, "r_in_mm": _pos,
                                       "r_out_mm": _pos},
                                      ["start_mm", "end_mm", "r_in_mm", "r_out_mm"])},
             ["hollow_cylinder"]),
        _obj({"box": _obj({"min_mm": _vec3, "max_mm": _vec3}, ["min_mm", "max_mm"])}, ["box"]),
        _obj({"half_space": _obj({"point_mm": _vec3, "normal": _vec3}, ["point_mm", "normal"])},
             ["half_space"]),
        _obj({"union": {"type": "array", "items": {"$ref": "#/$defs/shape"}, "minItems": 1}},
             ["union"]),
        _obj({"intersection": {"type": "array", "items": {"$ref": "#/$defs/shape"},
                               "minItems": 1}}, ["intersection"]),
        _obj({"difference": {"type": "array", "items": {"$ref": "#/$defs/shape"},
                             "minItems": 2, "maxItems": 2}}, ["difference"]),
        _obj({"stl": _obj({"path": {"type": "string"}}, ["path"])}, ["stl"]),
    ],
}
del _SHAPE["$id"]

_DOF = {"enum": list(DOF_ORDER)}

JOB_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"shape": _SHAPE},
    "type": "object",
    "additionalProperties": False,
    "required": ["materials", "nodes_mm"],
    "properties": {
        "name": {"type": "string"},
        "materials": {"type": "object", "minProperties": 1, "additionalProperties":
                      _obj({"E_MPa": _pos, "nu": {"type": "number", "exclusiveMinimum": -1,
                                                  "exclusiveMaximum": 0.5}},
                           ["E_MPa", "nu"])},
        "sections": {"type": "object", "additionalProperties": {"oneOf": [
            _obj({"circular": _obj({"radius_mm": _pos}, ["radius_mm"])}, ["circular"]),
            _obj({"hollow_circular": _obj({"r_in_mm": _pos, "r_out_mm": _pos},
                                          ["r_in_mm", "r_out_mm"])}, ["hollow_circular"]),
            _obj({"generic": _obj({"A_mm2": _pos, "Iy_mm4": _pos, "Iz_mm4": _pos,
                                   "J_mm4": _pos, "kappa": {"type": "number",
                                                            "exclusiveMinimum": 0,
                                                            "maximum": 1}},
                                  ["A_mm2", "Iy_mm4", "Iz_mm4", "J_mm4", "kappa"])},
                 ["generic"]),
        ]}},
        "nodes_mm": {"type": "object", "minProperties": 1, "additionalProperties": _vec3},
        "elements": {"type": "array", "items": _obj({
            "id": _name, "a": _name, "b": _name, "material": {"type": "string"},
            "section": {"type": "string"},
            "divisions": {"type": "integer", "minimum": 1},
            "ref": _vec3,
        }, ["id", "a", "b", "material", "section"])},
        "supports": {"type": "object", "additionalProperties": {
            "type": "array", "items": _DOF, "uniqueItems": True}},
        "loads": {"type": "object", "additionalProperties": _obj({
            "force_N": _vec3, "moment_Nmm": _vec3})},
        "substructures": {"type": "array", "items": _obj({
            "name": {"type": "string"},
            "material": {"type": "string"},
            "geometry": {"$ref": "#/$defs/shape"},
            "alpha_exponent": {"type": "integer", "minimum": 1},
            "box_mm": {"type": "array", "items": _vec3, "minItems": 2, "maxItems": 2},
            "interfaces": {"type": "array", "minItems": 1, "items": _obj({
                "node": _name, "centroid_mm": _vec3, "normal": _vec3,
                "radius_mm": _pos, "inner_radius_mm": {"type": "number", "minimum": 0},
            }, ["node", "centroid_mm", "normal", "radius_mm"])},
            "fcm": _obj({
                "resolution": {"type": "array", "items": {"type": "integer", "minimum": 1},
                               "minItems": 3, "maxItems": 3},
                "p": {"type": "integer", "minimum": 1, "maximum": 8},
                "depth": {"type": "integer", "minimum": 0, "maximum": 8},
                "beta": _pos,
                "margin_mm": {"type": "number", "minimum": 0},
                "n_radial": {"type": "integer", "minimum": 1},
                "n_theta": {"type": "integer", "minimum": 8},
            }),
            "matrix_path": {"type": "string"},
        }, ["name", "material", "geometry", "interfaces"])},
        "outputs": _obj({
            "local_stress": {"type": "array", "items": {"type": "string"}},
            "vtk_subdivisions": {"type": "integer", "minimum": 1, "maximum": 8},
        }),
    },
}


class JobFileError(ValueError):
    """Invalid job file; ``location`` is a slash path into the document."""

    def __init__(self, message, location=""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass
class JobDocument:
    data: dict
    base: Path
    sha256: str
    path: str = ""


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e5`` and ``2.5e7`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"))


def _loc(path):
    return "/".join(str(p) for p in path) or "<root>"


def parse_job(text, base=".", path=""):
    """Parse and schema-validate job text (YAML or JSON)."""
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else ""
        raise JobFileError(f"YAML syntax error: {exc}", where) from None
    if not isinstance(data, dict):
        raise JobFileError("job file must contain a mapping")
    validator = jsonschema.Draft202012Validator(JOB_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise JobFileError(err.message, _loc(err.absolute_path))
    _check_references(data)
    digest = hashlib.sha256(text.encode() if isinstance(text, str) else text).hexdigest()
    return JobDocument(data, Path(base), digest, str(path))


def load_job(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise JobFileError(f"cannot read job file: {exc}") from None
    return parse_job(text, p.parent, p)


def _check_references(d):
    nodes = {str(n) for n in d["nodes_mm"]}
    mats = set(d["materials"])
    secs = set(d.get("sections", {}))
    for i, el in enumerate(d.get("elements", [])):
        for key, table in (("material", mats), ("section", secs)):
            if el[key] not in table:
                raise JobFileError(f"unknown {key} {el[key]!r}", f"elements/{i}/{key}")
        for key in ("a", "b"):
            if str(el[key]) not in nodes:
                raise JobFileError(f"unknown node {el[key]!r}", f"elements/{i}/{key}")
    # intermediate nodes created by "divisions" may carry supports and loads
    generated = {f"{el['id']}.{k}" for el in d.get("elements", [])
                 for k in range(1, el.get("divisions", 1))}
    for table in ("supports", "loads"):
        for n in d.get(table, {}):
            if str(n) not in nodes | generated:
                raise JobFileError(f"unknown node {n!r}", f"{table}/{n}")
    names = set()
    for i, sub in enumerate(d.get("substructures", [])):
        if sub["name"] in names:
            raise JobFileError(f"duplicate substructure {sub['name']!r}", f"substructures/{i}")
        names.add(sub["name"])
        if sub["material"] not in mats:
            raise JobFileError(f"unknown material {sub['material']!r}",
                               f"substructures/{i}/material")
        seen = set()
        for j, iface in enumerate(sub["interfaces"]):
            n = str(iface["node"])
            if n not in nodes:
                raise JobFileError(f"unknown node {n!r}", f"substructures/{i}/interfaces/{j}/node")
            if n in seen:
                raise JobFileError(f"node {n!r} attached twice",
                                   f"substructures/{i}/interfaces/{j}/node")
            seen.add(n)
            if iface.get("inner_radius_mm", 0.0) >= iface["radius_mm"]:
                raise JobFileError("inner radius must be smaller than radius",
                                   f"substructures/{i}/interfaces/{j}")
    for n in d.get("outputs", {}).get("local_stress", []):
        if n not in names:
            raise JobFileError(f"unknown substructure {n!r}", "outputs/local_stress")


def _section(spec, nu):
    (kind, v), = spec.items()
    if kind == "circular":
        return section_circular(v["radius_mm"], nu)
    if kind == "hollow_circular":
        if v["r_in_mm"] >= v["r_out_mm"]:
            raise JobFileError("r_in_mm must be smaller than r_out_mm", "sections")
        return section_hollow_circular(v["r_in_mm"], v["r_out_mm"], nu)
    return CrossSection(v["A_mm2"], v["Iy_mm4"], v["Iz_mm4"], v["J_mm4"], v["kappa"])


def _geometry(d, base):
    (kind, v), = d.items()
    if kind == "stl":
        p = Path(v["path"])
        if not p.is_absolute():
            p = base / p
        try:
            return load_triangle_surface(p.read_bytes())
        except OSError as exc:
            raise JobFileError(f"cannot read STL: {exc}", "geometry/stl/path") from None
    if kind in ("union", "intersection", "difference"):
        parts = [_geometry(x, base) for x in v]
        if kind == "union":
            out = parts[0]
            for s in parts[1:]:
                out = out | s
            return out
        if kind == "intersection":
            out = parts[0]
            for s in parts[1:]:
                out = out & s
            return out
        return parts[0] - parts[1]
    return shape_from_dict(d)


def build_job(doc):
    """Convert a validated document into a ``TwoScaleJob``."""
    d = doc.data
    mats = {k: Material(v["E_MPa"], v["nu"]) for k, v in d["materials"].items()}
    frame = FrameModel()
    for nid, xyz in d["nodes_mm"].items():
        frame.add_node(str(nid), xyz)
    sec_cache = {}
    for el in d.get("elements", []):
        mat = mats[el["material"]]
        key = (el["section"], el["material"])
        if key not in sec_cache:
            sec_cache[key] = _section(d["sections"][el["section"]], mat.nu)
        sec = sec_cache[key]
        a, b = str(el["a"]), str(el["b"])
        n = el.get("divisions", 1)
        xa, xb = frame.nodes[a], frame.nodes[b]
        chain = [a]
        for i in range(1, n):
            chain.append(frame.add_node(f"{el['id']}.{i}", xa + (xb - xa) * i / n))
        chain.append(b)
        ref = el.get("ref", (0.0, 0.0, 1.0))
        for i in range(n):
            eid = str(el["id"]) if n == 1 else f"{el['id']}#{i}"
            frame.add_element(eid, chain[i], chain[i + 1], mat, sec, ref)
    for nid, dofs in d.get("supports", {}).items():
        frame.fix(str(nid), [dof in dofs for dof in DOF_ORDER])
    for nid, ld in d.get("loads", {}).items():
        frame.add_load(str(nid), list(ld.get("force_N", [0, 0, 0])) +
                       list(ld.get("moment_Nmm", [0, 0, 0])))
    subs = []
    for i, s in enumerate(d.get("substructures", [])):
        try:
            geom = _geometry(s["geometry"], doc.base)
            box = None
            if "box_mm" in s:
                box = (np.asarray(s["box_mm"][0], float), np.asarray(s["box_mm"][1], float))
            dom = Domain(geom, mats[s["material"]], s.get("alpha_exponent", 10), box)
            ifaces = [InterfaceSection(f["centroid_mm"], f["normal"], str(f["node"]),
                                       radius=f["radius_mm"],
                                       inner_radius=f.get("inner_radius_mm", 0.0))
                      for f in s["interfaces"]]
            f = s.get("fcm", {})
            params = FcmParameters(resolution=tuple(f.get("resolution", (20, 8, 8))),
                                   p=f.get("p", 3), depth=f.get("depth", 4),
                                   beta=float(f.get("beta", FcmParameters.beta)),
                                   margin=f.get("margin_mm", 0.0),
                                   n_radial=f.get("n_radial", 4), n_theta=f.get("n_theta", 48))
            spec = SubstructureSpec(dom, ifaces, params, s["name"])
        except JobFileError:
            raise
        except Exception as exc:
            raise JobFileError(str(exc), f"substructures/{i}") from None
        condensed = None
        if "matrix_path" in s:
            p = Path(s["matrix_path"])
            condensed = read_condensed(p if p.is_absolute() else doc.base / p)
        subs.append(Substructure(s["name"], spec, condensed))
    outs = d.get("outputs", {})
    return TwoScaleJob(frame, subs, list(outs.get("local_stress", [])), d.get("name", "job"))


def echo(doc):
    """Canonical parameter echo for manifests."""
    return json.loads(json.dumps(copy.deepcopy(doc.data), sort_keys=True))
