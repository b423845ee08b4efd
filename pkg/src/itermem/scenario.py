"""Scenario files: JSON documents describing membranes, forms and checks.

Exact data survives the trip through text: rationals are written ``"p/q"``
and complex scalars ``[re, im]``. A polynomial is a list of terms
``[exponents, coefficient]``. A file holds either one scenario or a suite
``{"suite": name, "scenarios": [...]}``.

Scenario keys::

    id, description?, field, n, d,
    engine:    {engine, quad_order, subdivision_depth, mc_samples, seed}
    membranes: {name: spec}   spec is one of
               {"catalog": name, "params": {...}}
               {"polynomial": [poly, ...]}
               {"piecewise": {"breakpoints": [[q, ...], ...],
                              "cells": [{"cell": [i, ...], "components": [poly, ...]}]}}
               {"compose": [name, name]}
               {"map": {"F": [poly, ...], "membrane": name}}
    forms:     {name: {"degree"?, "dim"?, "terms": [{"index": [...], "coeff": poly}
                                                 | {"index": [...], "callable": {...}}]}}
    families:  {name: {"paths": [poly in (t, u) | {"catalog": "sine_bulge", "amplitude": x}]}}
    compute?:  {membrane, forms, rho?}
    checks:    [{check, label?, tolerance?, flip_sign?, engine?, ...}]

``rho`` is a list of one-line permutations, one per observer, or ``"all"``
in a check to sweep every choice.
"""
from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .combinatorics import ObserverPermutations, Permutation, PermutationError
from .exact import GaussianRational, format_rational, parse_rational
from .forms import CallableCoefficient, DifferentialForm
from .integrate import EngineConfig, EngineError, IntegralResult, iterated_integral
from .membranes import (Membrane, PolynomialMembrane, Reparametrization, bump,
                        compose, constant, identity, map_membrane, product_of_paths, torus,
                        trig_bubble)
from .polynomial import Poly
from .verify import (CheckError, CheckReport, HomotopyFamily, check_classical_reduction,
                     check_composition, check_homotopy_invariance, check_naturality,
                     check_reparametrization, check_shuffle, check_vanishing)

ENGINE_DEFAULTS = {"engine": "quadrature", "quad_order": 8, "subdivision_depth": 1,
                   "mc_samples": 100_000, "seed": None}
ENGINE_KEYS = tuple(ENGINE_DEFAULTS)

# per check kind: accepted keys and their defaults
CHECK_FIELDS = {
    "reparametrization": {"membrane": None, "phi": None, "forms": None, "rho": None},
    "naturality": {"map": None, "membrane": None, "forms": None, "rho": None},
    "shuffle": {"membrane": None, "forms_a": None, "forms_b": None, "rho": None, "rho_prime": None,
                "oriented": True},
    "composition": {"membranes": None, "forms": None},
    "vanishing": {"membranes": None, "forms": None},
    "classical_reduction": {"membrane": None, "forms": None, "rho": None},
    "homotopy": {"family": None, "forms": None, "rho": None, "u_samples": ["0", "1/2", "1"],
                 "allow_nonholomorphic": False},
}
COMMON_CHECK_FIELDS = {"label": None, "tolerance": None, "flip_sign": False, "engine": None}
REQUIRED = {"reparametrization": ("membrane", "phi", "forms"),
            "naturality": ("map", "membrane", "forms"),
            "shuffle": ("membrane", "forms_a", "forms_b"),
            "composition": ("membranes", "forms"),
            "vanishing": ("membranes", "forms"),
            "classical_reduction": ("membrane", "forms", "rho"),
            "homotopy": ("family", "forms")}

CATALOG = ("identity", "constant", "bump", "product_of_paths", "torus", "trig_bubble")
CALLABLES = ("abs_squared",)
PATH_CATALOG = ("sine_bulge",)


class ScenarioError(ValueError):
    """Invalid scenario data; ``field`` names the offending location."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# scalar and polynomial codecs ----------------------------------------------


def _scalar(value, fld: str, path: str):
    try:
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError("complex scalars are written [re, im]")
            if fld != "complex":
                raise ValueError("complex scalar in a real scenario")
            return GaussianRational(parse_rational(value[0]), parse_rational(value[1]))
        q = parse_rational(value)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None
    return GaussianRational(q) if fld == "complex" else q


def _format_exact(x, fld: str):
    if fld == "complex":
        x = x if isinstance(x, GaussianRational) else GaussianRational(x)
        return [format_rational(x.re), format_rational(x.im)]
    return format_rational(x)


def _float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    try:
        return float(Fraction(value)) if isinstance(value, str) else float(value)
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(path, f"expected a number, got {value!r}") from None


def _int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(path, f"must be at least {minimum}")
    return value


def _list(value, path: str, length: int | None = None) -> list:
    if not isinstance(value, list):
        raise ScenarioError(path, f"expected a list, got {type(value).__name__}")
    if length is not None and len(value) != length:
        raise ScenarioError(path, f"expected {length} entries, got {len(value)}")
    return value


def _dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, f"expected an object, got {type(value).__name__}")
    return value


def _no_extra(data: dict, allowed, path: str):
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ScenarioError(f"{path}.{extra[0]}", "unknown key")


def parse_poly(data, nvars: int, fld: str, path: str) -> Poly:
    terms = {}
    for k, term in enumerate(_list(data, path)):
        tpath = f"{path}[{k}]"
        exps, coeff = _list(term, tpath, 2)
        exps = _list(exps, f"{tpath}[0]", nvars)
        for j, e in enumerate(exps):
            _int(e, f"{tpath}[0][{j}]", 0)
        key = tuple(exps)
        c = _scalar(coeff, fld, f"{tpath}[1]")
        terms[key] = terms.get(key, 0) + c
    return Poly(nvars, terms)


def format_poly(p: Poly, fld: str) -> list:
    return [[list(e), _format_exact(c, fld)] for e, c in sorted(p.terms.items())]


def _polys(data, nvars, fld, path, length=None):
    return [parse_poly(p, nvars, fld, f"{path}[{k}]")
            for k, p in enumerate(_list(data, path, length))]


def parse_rho(data, n: int, s: int | None, path: str) -> ObserverPermutations:
    perms = []
    for nu, p in enumerate(_list(data, path, n)):
        ppath = f"{path}[{nu}]"
        images = _list(p, ppath)
        if s is not None and len(images) != s:
            raise ScenarioError(ppath, f"expected a permutation of {s} events, got {len(images)} entries")
        for j, v in enumerate(images):
            _int(v, f"{ppath}[{j}]")
        try:
            perms.append(Permutation(tuple(images)))
        except PermutationError as exc:
            raise ScenarioError(ppath, str(exc)) from None
    return ObserverPermutations(tuple(perms))


def format_rho(rho: ObserverPermutations) -> list:
    return rho.to_lists()


# specs ---------------------------------------------------------------------


@dataclass
class MembraneSpec:
    kind: str
    data: object


@dataclass
class FormSpec:
    form: DifferentialForm
    callables: dict = field(default_factory=dict)


@dataclass
class CheckSpec:
    kind: str
    values: dict


@dataclass
class Scenario:
    id: str
    field: str
    n: int
    d: int
    engine: dict
    membranes: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    families: dict = field(default_factory=dict)
    compute: dict | None = None
    checks: list = field(default_factory=list)
    description: str | None = None
    _built: dict = field(default_factory=dict, repr=False, compare=False)

    # materialization ------------------------------------------------------

    def membrane(self, name: str, path: str = "membranes") -> Membrane:
        if name not in self.membranes:
            raise ScenarioError(path, f"unknown membrane {name!r}")
        key = ("membrane", name)
        if key not in self._built:
            self._built[key] = None
            self._built[key] = _build_membrane(self, name, self.membranes[name])
        if self._built[key] is None:
            raise ScenarioError(f"membranes.{name}", "membrane definitions form a cycle")
        return self._built[key]

    def form(self, name: str, path: str = "forms") -> DifferentialForm:
        if name not in self.forms:
            raise ScenarioError(path, f"unknown form {name!r}")
        return self.forms[name].form

    def form_list(self, names, path: str) -> list:
        return [self.form(nm, f"{path}[{k}]") for k, nm in enumerate(names)]

    def family(self, name: str, path: str = "family") -> HomotopyFamily:
        if name not in self.families:
            raise ScenarioError(path, f"unknown family {name!r}")
        key = ("family", name)
        if key not in self._built:
            paths = [p if isinstance(p, Poly) else _path_catalog(p) for p in self.families[name]]
            try:
                self._built[key] = HomotopyFamily(paths, label=name)
            except CheckError as exc:
                raise ScenarioError(f"families.{name}", str(exc)) from None
        return self._built[key]

    def engine_config(self, *overrides) -> EngineConfig:
        data = dict(self.engine)
        for o in overrides:
            if o:
                data.update({k: v for k, v in o.items() if v is not None})
        try:
            return EngineConfig(engine=data["engine"], quad_order=data["quad_order"],
                                subdivision_depth=data["subdivision_depth"],
                                mc_samples=data["mc_samples"], seed=data["seed"], field=self.field)
        except EngineError as exc:
            raise ScenarioError(f"{self.id}.engine", str(exc)) from None


@dataclass
class Suite:
    name: str
    scenarios: list
    single: bool = False


# parsing -------------------------------------------------------------------


def _parse_catalog(name, params, scn, path):
    params = _dict(params, path)
    fld, n, d = scn.field, scn.n, scn.d
    if name == "identity":
        _no_extra(params, (), path)
        return {}
    if name == "constant":
        _no_extra(params, ("x0",), path)
        return {"x0": [_scalar(x, fld, f"{path}.x0[{i}]") for i, x in enumerate(_list(params.get("x0"), f"{path}.x0", d))]}
    if name == "bump":
        _no_extra(params, ("x0", "v", "m", "powers"), path)
        out = {"x0": [_scalar(x, fld, f"{path}.x0[{i}]") for i, x in enumerate(_list(params.get("x0"), f"{path}.x0", d))],
               "v": [_scalar(x, fld, f"{path}.v[{i}]") for i, x in enumerate(_list(params.get("v"), f"{path}.v", d))],
               "m": _int(params.get("m", 2), f"{path}.m", 1), "powers": None}
        if params.get("powers") is not None:
            rows = _list(params["powers"], f"{path}.powers", d)
            out["powers"] = [[_int(e, f"{path}.powers[{i}][{j}]", 0)
                              for j, e in enumerate(_list(row, f"{path}.powers[{i}]", n))]
                             for i, row in enumerate(rows)]
        return out
    if name == "product_of_paths":
        _no_extra(params, ("paths",), path)
        return {"paths": _polys(params.get("paths"), 1, fld, f"{path}.paths", n)}
    if name == "torus":
        _no_extra(params, ("R", "r"), path)
        return {"R": _float(params.get("R", 2.0), f"{path}.R"), "r": _float(params.get("r", 1.0), f"{path}.r")}
    if name == "trig_bubble":
        _no_extra(params, ("x0", "amplitudes", "frequencies"), path)
        return {"x0": [_float(x, f"{path}.x0[{i}]") for i, x in enumerate(_list(params.get("x0"), f"{path}.x0", d))],
                "amplitudes": [_float(x, f"{path}.amplitudes[{i}]")
                               for i, x in enumerate(_list(params.get("amplitudes"), f"{path}.amplitudes", d))],
                "frequencies": [[_int(e, f"{path}.frequencies[{i}][{j}]", 0)
                                 for j, e in enumerate(_list(row, f"{path}.frequencies[{i}]", n))]
                                for i, row in enumerate(_list(params.get("frequencies"), f"{path}.frequencies", d))]}
    raise ScenarioError(path, f"unknown catalog membrane {name!r}; choose from {', '.join(CATALOG)}")


def _parse_membrane(spec, scn, path) -> MembraneSpec:
    spec = _dict(spec, path)
    kinds = [k for k in ("catalog", "polynomial", "piecewise", "compose", "map") if k in spec]
    if len(kinds) != 1:
        raise ScenarioError(path, "give exactly one of catalog, polynomial, piecewise, compose, map")
    kind = kinds[0]
    if kind == "catalog":
        _no_extra(spec, ("catalog", "params"), path)
        name = spec["catalog"]
        return MembraneSpec("catalog", (name, _parse_catalog(name, spec.get("params", {}), scn, f"{path}.params")))
    _no_extra(spec, (kind,), path)
    if kind == "polynomial":
        return MembraneSpec(kind, _polys(spec[kind], scn.n, scn.field, f"{path}.polynomial", scn.d))
    if kind == "piecewise":
        body = _dict(spec[kind], f"{path}.piecewise")
        _no_extra(body, ("breakpoints", "cells"), f"{path}.piecewise")
        bps = []
        for nu, bp in enumerate(_list(body.get("breakpoints"), f"{path}.piecewise.breakpoints", scn.n)):
            bpath = f"{path}.piecewise.breakpoints[{nu}]"
            vals = [_scalar(b, "real", f"{bpath}[{j}]") for j, b in enumerate(_list(bp, bpath))]
            if any(not 0 < v < 1 for v in vals) or vals != sorted(set(vals)):
                raise ScenarioError(bpath, "breakpoints must increase strictly inside (0, 1)")
            bps.append(vals)
        cells = {}
        for k, entry in enumerate(_list(body.get("cells"), f"{path}.piecewise.cells")):
            cpath = f"{path}.piecewise.cells[{k}]"
            entry = _dict(entry, cpath)
            _no_extra(entry, ("cell", "components"), cpath)
            cell = tuple(_int(i, f"{cpath}.cell[{j}]", 0)
                         for j, i in enumerate(_list(entry.get("cell"), f"{cpath}.cell", scn.n)))
            if any(i > len(bp) for i, bp in zip(cell, bps)):
                raise ScenarioError(f"{cpath}.cell", "cell index beyond the breakpoints")
            if cell in cells:
                raise ScenarioError(f"{cpath}.cell", "duplicate cell")
            cells[cell] = _polys(entry.get("components"), scn.n, scn.field, f"{cpath}.components", scn.d)
        return MembraneSpec(kind, (bps, cells))
    if kind == "compose":
        names = _list(spec[kind], f"{path}.compose")
        if len(names) < 2 or not all(isinstance(x, str) for x in names):
            raise ScenarioError(f"{path}.compose", "list at least two membrane names")
        return MembraneSpec(kind, list(names))
    body = _dict(spec[kind], f"{path}.map")
    _no_extra(body, ("F", "membrane"), f"{path}.map")
    if not isinstance(body.get("membrane"), str):
        raise ScenarioError(f"{path}.map.membrane", "expected a membrane name")
    return MembraneSpec(kind, (_polys(body.get("F"), scn.d, scn.field, f"{path}.map.F"), body["membrane"]))


def _parse_form(spec, scn, path) -> FormSpec:
    spec = _dict(spec, path)
    _no_extra(spec, ("degree", "dim", "terms"), path)
    degree = _int(spec.get("degree", scn.n), f"{path}.degree", 0)
    dim = _int(spec.get("dim", scn.d), f"{path}.dim", 1)
    coeffs, callables = {}, {}
    for k, term in enumerate(_list(spec.get("terms", []), f"{path}.terms")):
        tpath = f"{path}.terms[{k}]"
        term = _dict(term, tpath)
        index = tuple(_int(i, f"{tpath}.index[{j}]", 1)
                      for j, i in enumerate(_list(term.get("index"), f"{tpath}.index", degree)))
        if index in coeffs:
            raise ScenarioError(f"{tpath}.index", "duplicate multi-index")
        if "coeff" in term:
            _no_extra(term, ("index", "coeff"), tpath)
            coeffs[index] = parse_poly(term["coeff"], dim, scn.field, f"{tpath}.coeff")
        elif "callable" in term:
            _no_extra(term, ("index", "callable"), tpath)
            desc = _dict(term["callable"], f"{tpath}.callable")
            callables[index] = _callable_desc(desc, dim, f"{tpath}.callable")
            coeffs[index] = _callable_coefficient(callables[index])
        else:
            raise ScenarioError(tpath, "term needs coeff or callable")
    try:
        form = DifferentialForm(dim, degree, coeffs, scn.field)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None
    kept = {i: c for i, c in callables.items() if i in form.coeffs}
    return FormSpec(form, kept)


def _callable_desc(desc, dim, path):
    name = desc.get("name")
    if name == "abs_squared":
        _no_extra(desc, ("name", "coordinate"), path)
        k = _int(desc.get("coordinate"), f"{path}.coordinate", 1)
        if k > dim:
            raise ScenarioError(f"{path}.coordinate", f"coordinate {k} beyond dimension {dim}")
        return {"name": name, "coordinate": k}
    raise ScenarioError(f"{path}.name", f"unknown callable {name!r}; choose from {', '.join(CALLABLES)}")


def _callable_coefficient(desc) -> CallableCoefficient:
    k = desc["coordinate"] - 1
    return CallableCoefficient(lambda x, k=k: np.abs(x[:, k]) ** 2, f"|z{k + 1}|^2")


def _parse_family(spec, scn, path):
    spec = _dict(spec, path)
    _no_extra(spec, ("paths",), path)
    out = []
    for k, p in enumerate(_list(spec.get("paths"), f"{path}.paths", scn.n)):
        ppath = f"{path}.paths[{k}]"
        if isinstance(p, dict):
            _no_extra(p, ("catalog", "amplitude"), ppath)
            if p.get("catalog") not in PATH_CATALOG:
                raise ScenarioError(f"{ppath}.catalog", f"unknown path catalog entry {p.get('catalog')!r}")
            out.append({"catalog": p["catalog"], "amplitude": _float(p.get("amplitude", 1.0), f"{ppath}.amplitude")})
        else:
            out.append(parse_poly(p, 2, "complex", ppath))
    return out


def _path_catalog(desc):
    a = desc["amplitude"]

    def f(t, u):
        return t + 1j * u * a * np.sin(np.pi * t)

    def df(t, u):
        return 1 + 1j * u * a * np.pi * np.cos(np.pi * t)

    return f, df


def _names(value, path, scn_table, what):
    names = _list(value, path)
    for k, nm in enumerate(names):
        if not isinstance(nm, str):
            raise ScenarioError(f"{path}[{k}]", f"expected a {what} name")
        if nm not in scn_table:
            raise ScenarioError(f"{path}[{k}]", f"unknown {what} {nm!r}")
    return list(names)


def _name(value, path, scn_table, what):
    if not isinstance(value, str):
        raise ScenarioError(path, f"expected a {what} name")
    if value not in scn_table:
        raise ScenarioError(path, f"unknown {what} {value!r}")
    return value


def _parse_engine(data, path, partial=False) -> dict:
    data = _dict(data, path)
    _no_extra(data, ENGINE_KEYS, path)
    out = {} if partial else dict(ENGINE_DEFAULTS)
    for key, value in data.items():
        if key == "engine":
            if value not in ("exact", "quadrature", "montecarlo"):
                raise ScenarioError(f"{path}.engine", f"unknown engine {value!r}")
            out[key] = value
        elif key == "seed":
            out[key] = None if value is None else _int(value, f"{path}.seed", 0)
        else:
            out[key] = _int(value, f"{path}.{key}", 1)
    return out


def _parse_check(data, scn: Scenario, path) -> CheckSpec:
    data = _dict(data, path)
    kind = data.get("check")
    if kind not in CHECK_FIELDS:
        raise ScenarioError(f"{path}.check", f"unknown check {kind!r}; choose from {', '.join(CHECK_FIELDS)}")
    allowed = ("check",) + tuple(CHECK_FIELDS[kind]) + tuple(COMMON_CHECK_FIELDS)
    _no_extra(data, allowed, path)
    for key in REQUIRED[kind]:
        if key not in data:
            raise ScenarioError(f"{path}.{key}", "missing")
    v = {**COMMON_CHECK_FIELDS, **copy.deepcopy(CHECK_FIELDS[kind])}
    if data.get("label") is not None:
        if not isinstance(data["label"], str):
            raise ScenarioError(f"{path}.label", "expected a string")
        v["label"] = data["label"]
    if data.get("tolerance") is not None:
        v["tolerance"] = _float(data["tolerance"], f"{path}.tolerance")
    if "flip_sign" in data:
        if not isinstance(data["flip_sign"], bool):
            raise ScenarioError(f"{path}.flip_sign", "expected true or false")
        v["flip_sign"] = data["flip_sign"]
    if data.get("engine") is not None:
        v["engine"] = _parse_engine(data["engine"], f"{path}.engine", partial=True)
    forms_keys = [k for k in ("forms", "forms_a", "forms_b") if k in CHECK_FIELDS[kind]]
    for key in forms_keys:
        if key in data:
            v[key] = _names(data[key], f"{path}.{key}", scn.forms, "form")
    if "membrane" in CHECK_FIELDS[kind]:
        v["membrane"] = _name(data["membrane"], f"{path}.membrane", scn.membranes, "membrane")
    if "membranes" in CHECK_FIELDS[kind]:
        v["membranes"] = _names(data["membranes"], f"{path}.membranes", scn.membranes, "membrane")
    if kind == "homotopy":
        v["family"] = _name(data["family"], f"{path}.family", scn.families, "family")
        if "u_samples" in data:
            v["u_samples"] = [_scalar(u, "real", f"{path}.u_samples[{k}]")
                              for k, u in enumerate(_list(data["u_samples"], f"{path}.u_samples"))]
        else:
            v["u_samples"] = [Fraction(u) for u in v["u_samples"]]
        if "allow_nonholomorphic" in data:
            if not isinstance(data["allow_nonholomorphic"], bool):
                raise ScenarioError(f"{path}.allow_nonholomorphic", "expected true or false")
            v["allow_nonholomorphic"] = data["allow_nonholomorphic"]
    if kind == "shuffle" and "oriented" in data:
        if not isinstance(data["oriented"], bool):
            raise ScenarioError(f"{path}.oriented", "expected true or false")
        v["oriented"] = data["oriented"]
    if kind == "reparametrization":
        v["phi"] = _polys(data["phi"], scn.n, "real", f"{path}.phi", scn.n)
    if kind == "naturality":
        v["map"] = _polys(data["map"], scn.d, scn.field, f"{path}.map")
    # event orders
    sizes = {"rho": len(v.get("forms_a") or v.get("forms") or []), "rho_prime": len(v.get("forms_b") or [])}
    for key in ("rho", "rho_prime"):
        if key in CHECK_FIELDS[kind] and data.get(key) is not None:
            if data[key] == "all":
                v[key] = "all"
            elif kind == "classical_reduction":
                raw = _list(data[key], f"{path}.{key}")
                nested = bool(raw) and isinstance(raw[0], list)
                v[key] = parse_rho(raw if nested else [raw], 1, sizes[key], f"{path}.{key}")
            else:
                n = scn.n
                v[key] = parse_rho(data[key], n, sizes[key], f"{path}.{key}")
    if kind == "classical_reduction" and scn.n != 1:
        raise ScenarioError(f"{path}.check", "classical reduction needs n = 1")
    return CheckSpec(kind, v)


def parse_scenario(data, path: str = "scenario") -> Scenario:
    data = _dict(data, path)
    _no_extra(data, ("id", "description", "field", "n", "d", "engine", "membranes", "forms",
                     "families", "compute", "checks"), path)
    sid = data.get("id")
    if not isinstance(sid, str) or not sid:
        raise ScenarioError(f"{path}.id", "a non-empty string id is required")
    fld = data.get("field", "real")
    if fld not in ("real", "complex"):
        raise ScenarioError(f"{path}.field", f"unknown field {fld!r}")
    n = _int(data.get("n"), f"{path}.n", 1)
    d = _int(data.get("d"), f"{path}.d", 1)
    desc = data.get("description")
    if desc is not None and not isinstance(desc, str):
        raise ScenarioError(f"{path}.description", "expected a string")
    scn = Scenario(sid, fld, n, d, _parse_engine(data.get("engine", {}), f"{path}.engine"),
                   description=desc)
    for name, spec in _dict(data.get("membranes", {}), f"{path}.membranes").items():
        scn.membranes[name] = _parse_membrane(spec, scn, f"{path}.membranes.{name}")
    for name, spec in scn.membranes.items():
        refs = spec.data if spec.kind == "compose" else [spec.data[1]] if spec.kind == "map" else []
        for k, ref in enumerate(refs):
            if ref not in scn.membranes:
                raise ScenarioError(f"{path}.membranes.{name}.{spec.kind}", f"unknown membrane {ref!r}")
    for name, spec in _dict(data.get("forms", {}), f"{path}.forms").items():
        scn.forms[name] = _parse_form(spec, scn, f"{path}.forms.{name}")
    for name, spec in _dict(data.get("families", {}), f"{path}.families").items():
        scn.families[name] = _parse_family(spec, scn, f"{path}.families.{name}")
    if data.get("compute") is not None:
        comp = _dict(data["compute"], f"{path}.compute")
        _no_extra(comp, ("membrane", "forms", "rho"), f"{path}.compute")
        forms = _names(comp.get("forms"), f"{path}.compute.forms", scn.forms, "form")
        scn.compute = {"membrane": _name(comp.get("membrane"), f"{path}.compute.membrane",
                                         scn.membranes, "membrane"),
                       "forms": forms,
                       "rho": None if comp.get("rho") is None else
                       parse_rho(comp["rho"], n, len(forms), "rho")}
    for k, check in enumerate(_list(data.get("checks", []), f"{path}.checks")):
        scn.checks.append(_parse_check(check, scn, f"{path}.checks[{k}]"))
    return scn


def parse(data) -> Suite:
    """Parse a decoded JSON document: a single scenario or a suite."""
    data = _dict(data, "document")
    if "scenarios" in data:
        _no_extra(data, ("suite", "scenarios"), "document")
        name = data.get("suite", "suite")
        if not isinstance(name, str):
            raise ScenarioError("suite", "expected a string")
        scenarios = [parse_scenario(s, f"scenarios[{k}]")
                     for k, s in enumerate(_list(data["scenarios"], "scenarios"))]
        ids = [s.id for s in scenarios]
        dup = next((i for i in ids if ids.count(i) > 1), None)
        if dup is not None:
            raise ScenarioError("scenarios", f"duplicate scenario id {dup!r}")
        return Suite(name, scenarios)
    scn = parse_scenario(data)
    return Suite(scn.id, [scn], single=True)


# serialization --------------------------------------------------------------


def _serialize_catalog(name, params, scn):
    fld = scn.field
    if name == "identity":
        return {}
    if name == "constant":
        return {"x0": [_format_exact(x, fld) for x in params["x0"]]}
    if name == "bump":
        out = {"x0": [_format_exact(x, fld) for x in params["x0"]],
               "v": [_format_exact(x, fld) for x in params["v"]], "m": params["m"]}
        if params["powers"] is not None:
            out["powers"] = params["powers"]
        return out
    if name == "product_of_paths":
        return {"paths": [format_poly(p, fld) for p in params["paths"]]}
    return dict(params)


def _serialize_membrane(spec: MembraneSpec, scn):
    fld = scn.field
    if spec.kind == "catalog":
        name, params = spec.data
        return {"catalog": name, "params": _serialize_catalog(name, params, scn)}
    if spec.kind == "polynomial":
        return {"polynomial": [format_poly(p, fld) for p in spec.data]}
    if spec.kind == "piecewise":
        bps, cells = spec.data
        return {"piecewise": {"breakpoints": [[format_rational(b) for b in bp] for bp in bps],
                              "cells": [{"cell": list(c), "components": [format_poly(p, fld) for p in cells[c]]}
                                        for c in sorted(cells)]}}
    if spec.kind == "compose":
        return {"compose": list(spec.data)}
    F, name = spec.data
    return {"map": {"F": [format_poly(p, fld) for p in F], "membrane": name}}


def _serialize_form(spec: FormSpec, scn):
    w = spec.form
    terms = []
    for index in sorted(w.coeffs):
        if index in spec.callables:
            terms.append({"index": list(index), "callable": dict(spec.callables[index])})
        else:
            terms.append({"index": list(index), "coeff": format_poly(w.coeffs[index], scn.field)})
    return {"degree": w.degree, "dim": w.dim, "terms": terms}


def _serialize_check(chk: CheckSpec, scn):
    v = chk.values
    out = {"check": chk.kind}
    for key, default in {**COMMON_CHECK_FIELDS, **CHECK_FIELDS[chk.kind]}.items():
        value = v.get(key, default)
        if key in ("rho", "rho_prime") and isinstance(value, ObserverPermutations):
            value = value.to_lists()[0] if chk.kind == "classical_reduction" else format_rho(value)
        elif key == "phi":
            value = [format_poly(p, "real") for p in value]
        elif key == "map":
            value = [format_poly(p, scn.field) for p in value]
        elif key == "u_samples":
            value = [format_rational(u) for u in value]
        elif key == "engine" and value is not None:
            value = {k: value[k] for k in ENGINE_KEYS if k in value}
        out[key] = value
    return out


def serialize_scenario(scn: Scenario) -> dict:
    out = {"id": scn.id}
    if scn.description is not None:
        out["description"] = scn.description
    out.update({"field": scn.field, "n": scn.n, "d": scn.d,
                "engine": {k: scn.engine[k] for k in ENGINE_KEYS},
                "membranes": {k: _serialize_membrane(v, scn) for k, v in scn.membranes.items()},
                "forms": {k: _serialize_form(v, scn) for k, v in scn.forms.items()},
                "families": {k: {"paths": [dict(p) if isinstance(p, dict) else format_poly(p, "complex")
                                           for p in v]}
                             for k, v in scn.families.items()}})
    if scn.compute is not None:
        out["compute"] = {"membrane": scn.compute["membrane"], "forms": list(scn.compute["forms"]),
                          "rho": None if scn.compute["rho"] is None else format_rho(scn.compute["rho"])}
    out["checks"] = [_serialize_check(c, scn) for c in scn.checks]
    return out


def serialize(suite: Suite) -> dict:
    if suite.single:
        return serialize_scenario(suite.scenarios[0])
    return {"suite": suite.name, "scenarios": [serialize_scenario(s) for s in suite.scenarios]}


def dumps(data) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# normalization without building objects -------------------------------------


def _norm_rational(x):
    return format_rational(Fraction(x) if isinstance(x, str) else Fraction(int(x)))


def _norm_scalar(x, fld):
    if isinstance(x, list):
        return [_norm_rational(x[0]), _norm_rational(x[1])]
    return [_norm_rational(x), "0"] if fld == "complex" else _norm_rational(x)


def _norm_poly(terms, fld):
    acc = {}
    for exps, c in terms:
        c = _norm_scalar(c, fld)
        pair = (Fraction(c[0]), Fraction(c[1])) if fld == "complex" else (Fraction(c), Fraction(0))
        old = acc.get(tuple(exps), (Fraction(0), Fraction(0)))
        acc[tuple(exps)] = (old[0] + pair[0], old[1] + pair[1])
    out = []
    for e in sorted(acc):
        re, im = acc[e]
        if re or im:
            out.append([list(e), [format_rational(re), format_rational(im)] if fld == "complex"
                        else format_rational(re)])
    return out


def normalize(data) -> dict:
    """Canonical form of a scenario document, computed directly on the JSON.

    Fills defaults, reduces rationals, merges and sorts polynomial terms and
    drops zero ones. ``serialize(parse(doc))`` must agree with it.
    """
    if "scenarios" in data:
        return {"suite": data.get("suite", "suite"),
                "scenarios": [_normalize_scenario(s) for s in data["scenarios"]]}
    return _normalize_scenario(data)


def _normalize_scenario(s) -> dict:
    fld = s.get("field", "real")
    n, d = s["n"], s["d"]
    out = {"id": s["id"]}
    if s.get("description") is not None:
        out["description"] = s["description"]
    out.update({"field": fld, "n": n, "d": d, "engine": {**ENGINE_DEFAULTS, **s.get("engine", {})}})
    mems = {}
    for name, m in s.get("membranes", {}).items():
        if "catalog" in m:
            params = copy.deepcopy(m.get("params", {}))
            cat = m["catalog"]
            if cat in ("constant", "bump"):
                for key in ("x0", "v"):
                    if key in params:
                        params[key] = [_norm_scalar(x, fld) for x in params[key]]
                if cat == "bump":
                    params.setdefault("m", 2)
                    if params.get("powers") is None:
                        params.pop("powers", None)
            elif cat == "product_of_paths":
                params["paths"] = [_norm_poly(p, fld) for p in params["paths"]]
            elif cat == "torus":
                params = {"R": float(params.get("R", 2.0)), "r": float(params.get("r", 1.0))}
            elif cat == "trig_bubble":
                params = {"x0": [float(x) for x in params["x0"]],
                          "amplitudes": [float(x) for x in params["amplitudes"]],
                          "frequencies": params["frequencies"]}
            mems[name] = {"catalog": cat, "params": params}
        elif "polynomial" in m:
            mems[name] = {"polynomial": [_norm_poly(p, fld) for p in m["polynomial"]]}
        elif "piecewise" in m:
            pw = m["piecewise"]
            cells = sorted(pw["cells"], key=lambda c: c["cell"])
            mems[name] = {"piecewise": {"breakpoints": [[_norm_rational(b) for b in bp] for bp in pw["breakpoints"]],
                                        "cells": [{"cell": c["cell"], "components": [_norm_poly(p, fld) for p in c["components"]]}
                                                  for c in cells]}}
        elif "compose" in m:
            mems[name] = {"compose": list(m["compose"])}
        else:
            mems[name] = {"map": {"F": [_norm_poly(p, fld) for p in m["map"]["F"]], "membrane": m["map"]["membrane"]}}
    out["membranes"] = mems
    forms = {}
    for name, f in s.get("forms", {}).items():
        terms = []
        for t in sorted(f.get("terms", []), key=lambda t: t["index"]):
            if "callable" in t:
                terms.append({"index": t["index"], "callable": dict(t["callable"])})
            else:
                coeff = _norm_poly(t["coeff"], fld)
                if coeff:
                    terms.append({"index": t["index"], "coeff": coeff})
        forms[name] = {"degree": f.get("degree", n), "dim": f.get("dim", d), "terms": terms}
    out["forms"] = forms
    out["families"] = {name: {"paths": [p if isinstance(p, dict) else _norm_poly(p, "complex")
                                        for p in fam["paths"]]}
                       for name, fam in s.get("families", {}).items()}
    for fam in out["families"].values():
        for p in fam["paths"]:
            if isinstance(p, dict):
                p["amplitude"] = float(p.get("amplitude", 1.0))
    if s.get("compute") is not None:
        out["compute"] = {"membrane": s["compute"]["membrane"], "forms": s["compute"]["forms"],
                          "rho": s["compute"].get("rho")}
    checks = []
    for c in s.get("checks", []):
        kind = c["check"]
        nc = {"check": kind}
        for key, default in {**COMMON_CHECK_FIELDS, **CHECK_FIELDS[kind]}.items():
            value = copy.deepcopy(c.get(key, default))
            if key == "tolerance" and value is not None:
                value = float(value)
            elif key == "phi":
                value = [_norm_poly(p, "real") for p in value]
            elif key == "map":
                value = [_norm_poly(p, fld) for p in value]
            elif key == "u_samples":
                value = [_norm_rational(u) for u in value]
            elif key == "rho" and kind == "classical_reduction" and isinstance(value, list) \
                    and value and isinstance(value[0], list):
                value = value[0]
            nc[key] = value
        checks.append(nc)
    out["checks"] = checks
    return out


# loading --------------------------------------------------------------------


def builtin_names() -> list:
    root = resources.files("itermem") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_text(source: str) -> str:
    """Read a scenario file, or a built-in suite or example by name."""
    path = Path(source)
    if path.exists():
        return path.read_text(encoding="utf-8")
    res = resources.files("itermem") / "scenarios" / f"{source}.json"
    if res.is_file():
        return res.read_text(encoding="utf-8")
    raise ScenarioError("source", f"no file or built-in suite named {source!r}")


def load(source: str) -> Suite:
    text = load_text(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("document", f"invalid JSON: {exc}") from None
    return parse(data)


# building membranes ---------------------------------------------------------


def _build_membrane(scn: Scenario, name: str, spec: MembraneSpec) -> Membrane:
    path = f"membranes.{name}"
    try:
        if spec.kind == "catalog":
            cat, p = spec.data
            if cat == "identity":
                if scn.n != scn.d:
                    raise ScenarioError(path, "identity needs n = d")
                return identity(scn.n)
            if cat == "constant":
                return constant(scn.n, p["x0"], scn.field)
            if cat == "bump":
                return bump(scn.n, p["x0"], p["v"], p["m"], p["powers"], scn.field)
            if cat == "product_of_paths":
                if scn.n != scn.d:
                    raise ScenarioError(path, "product of paths needs n = d")
                return product_of_paths(p["paths"], scn.field)
            if cat == "torus":
                if (scn.n, scn.d) != (2, 3):
                    raise ScenarioError(path, "torus needs n = 2, d = 3")
                return torus(p["R"], p["r"])
            return trig_bubble(scn.n, p["x0"], p["amplitudes"], p["frequencies"])
        if spec.kind == "polynomial":
            return PolynomialMembrane.single(spec.data, scn.field, label=name)
        if spec.kind == "piecewise":
            bps, cells = spec.data
            return PolynomialMembrane(scn.n, scn.d, cells, bps, scn.field, label=name)
        if spec.kind == "compose":
            parts = [scn.membrane(m, f"{path}.compose") for m in spec.data]
            out = parts[0]
            for g in parts[1:]:
                out = compose(out, g)
            return out
        F, inner = spec.data
        return map_membrane(F, scn.membrane(inner, f"{path}.map.membrane"))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


# running --------------------------------------------------------------------


def _rho_tag(rho) -> str:
    return ".".join("".join(str(i) for i in p.images) for p in rho)


def expand_check(scn: Scenario, chk: CheckSpec, index: int):
    """Yield ``(record id, keyword values)`` with every ``"all"`` sweep unrolled."""
    v = chk.values
    label = v["label"] or f"{index}-{chk.kind}"
    base = f"{scn.id}/{label}"
    sweeps = []
    for key in ("rho", "rho_prime"):
        if v.get(key) == "all":
            forms = v.get("forms_b") if key == "rho_prime" else (v.get("forms_a") or v.get("forms"))
            n = 1 if chk.kind == "classical_reduction" else scn.n
            sweeps.append((key, list(ObserverPermutations.all(n, len(forms)))))
    if not sweeps:
        yield base, dict(v)
        return
    for combo in itertools.product(*[opts for _, opts in sweeps]):
        values = dict(v)
        tags = []
        for (key, _), rho in zip(sweeps, combo):
            values[key] = rho
            tags.append(f"{key}={_rho_tag(rho)}")
        yield f"{base}[{','.join(tags)}]", values


def _phi(polys) -> Reparametrization:
    return Reparametrization.from_polynomials(polys, label="phi")


def run_check(scn: Scenario, kind: str, values: dict, cfg: EngineConfig, record_id: str,
              tolerance=None) -> CheckReport:
    tol = tolerance if tolerance is not None else values.get("tolerance")
    flip = values.get("flip_sign", False)
    try:
        if kind == "reparametrization":
            return check_reparametrization(scn.membrane(values["membrane"]), _phi(values["phi"]),
                                           scn.form_list(values["forms"], "forms"), values["rho"], cfg, tol,
                                           record_id, flip)
        if kind == "naturality":
            return check_naturality(values["map"], scn.membrane(values["membrane"]),
                                    scn.form_list(values["forms"], "forms"), values["rho"], cfg, tol,
                                    record_id, flip)
        if kind == "shuffle":
            return check_shuffle(scn.membrane(values["membrane"]), scn.form_list(values["forms_a"], "forms_a"),
                                 scn.form_list(values["forms_b"], "forms_b"), values["rho"],
                                 values["rho_prime"], cfg, tol, values["oriented"], record_id, flip)
        if kind == "composition":
            g1, g2 = [scn.membrane(m) for m in values["membranes"][:2]]
            return check_composition(g1, g2, scn.form_list(values["forms"], "forms"), cfg, tol, record_id, flip)
        if kind == "vanishing":
            return check_vanishing([scn.membrane(m) for m in values["membranes"]],
                                   scn.form_list(values["forms"], "forms"), cfg, tol, record_id, flip)
        if kind == "classical_reduction":
            return check_classical_reduction(scn.membrane(values["membrane"]),
                                             scn.form_list(values["forms"], "forms"), values["rho"], cfg, tol,
                                             record_id, flip)
        return check_homotopy_invariance(scn.family(values["family"]), scn.form_list(values["forms"], "forms"),
                                         values["rho"], values["u_samples"], cfg, tol, record_id, flip,
                                         values["allow_nonholomorphic"])
    except ValueError as exc:
        return CheckReport.error(kind, record_id, str(exc), cfg.metadata())


def run_scenario(scn: Scenario, overrides: dict | None = None, tolerance=None) -> list:
    """All check records of a scenario, in file order with sweeps unrolled."""
    reports = []
    for k, chk in enumerate(scn.checks):
        for record_id, values in expand_check(scn, chk, k):
            try:
                cfg = scn.engine_config(values.get("engine"), overrides)
            except ScenarioError as exc:
                reports.append(CheckReport.error(chk.kind, record_id, str(exc)))
                continue
            reports.append(run_check(scn, chk.kind, values, cfg, record_id, tolerance))
    return reports


def run_suite(suite: Suite, overrides: dict | None = None, tolerance=None) -> list:
    reports = []
    for scn in suite.scenarios:
        reports.extend(run_scenario(scn, overrides, tolerance))
    return reports


def compute(scn: Scenario, overrides: dict | None = None) -> IntegralResult:
    if scn.compute is None:
        raise ScenarioError(f"{scn.id}.compute", "scenario has no compute section")
    cfg = scn.engine_config(overrides)
    g = scn.membrane(scn.compute["membrane"], "compute.membrane")
    forms = scn.form_list(scn.compute["forms"], "compute.forms")
    return iterated_integral(g, forms, scn.compute["rho"], cfg)

