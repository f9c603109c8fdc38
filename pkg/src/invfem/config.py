"""JSON run configuration: schema, dotted overrides and conversion to problems."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .assembly import DirichletBC, Traction
from .driver import IGASettings, ProblemConfig
from .materials import MaterialKind, MaterialSpec
from .mesh import Mesh, generate_box_mesh, generate_cylinder_mesh, generate_unit_tetrahedron, read_gmsh
from .solver import SolverSettings

_EXPRS = {"type": "array", "items": {"type": ["string", "number"]}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _closed(properties, required=()):
    return {"type": "object", "properties": properties, "required": list(required), "additionalProperties": False}


def _when(generator, properties, required=()):
    props = {"generator": {"const": generator}, **properties}
    return {"if": {"properties": {"generator": {"const": generator}}}, "then": _closed(props, required)}


SCHEMA = _closed(
    {
        "mesh": {
            "type": "object",
            "required": ["generator"],
            "properties": {"generator": {"enum": ["box", "cylinder", "unit_tet", "gmsh"]}},
            "allOf": [
                _when(
                    "box",
                    {
                        "extents": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
                        "divisions": {"type": "array", "items": _POS_INT, "minItems": 3, "maxItems": 3},
                    },
                ),
                _when(
                    "cylinder",
                    {"length": _POS, "diameter": _POS, "axial_divisions": _POS_INT, "radial_layers": _POS_INT},
                    ["length", "diameter", "axial_divisions", "radial_layers"],
                ),
                _when("unit_tet", {}),
                _when("gmsh", {"path": {"type": "string"}}, ["path"]),
            ],
        },
        "direction": {"enum": ["forward", "inverse", "iga"]},
        "formulation": {"enum": ["displacement", "mixed"]},
        "degree": {"enum": [1, 2]},
        "quadrature_degree": {"type": "integer", "minimum": 1, "maximum": 6},
        "material": _closed(
            {
                "kind": {"enum": [k.value for k in MaterialKind]},
                "mu": {"type": "number"},
                "lambda": {"type": "number"},
                "c1": {"type": "number"},
                "c2": {"type": "number"},
                "d1": {"type": "number"},
                "d1_convention": {"enum": ["coefficient", "abaqus"]},
                "rho0": _POS,
            },
            ["kind"],
        ),
        "dirichlet": {
            "type": "array",
            "items": _closed(
                {
                    "tag": {"type": "integer"},
                    "components": {"type": "array", "items": {"type": "boolean"}, "minItems": 3, "maxItems": 3},
                    "exprs": _EXPRS,
                },
                ["tag", "exprs"],
            ),
        },
        "tractions": {
            "type": "array",
            "items": _closed({"tag": {"type": "integer"}, "exprs": _EXPRS}, ["tag", "exprs"]),
        },
        "body_force": _EXPRS,
        "solver": _closed(
            {
                "tol": _POS,
                "rtol": _POS,
                "max_iter": _POS_INT,
                "continuation_steps": _POS_INT,
                "max_bisections": _POS_INT,
            }
        ),
        "iga": _closed({"epsilon": _POS, "max_iterations": _POS_INT}),
        "probes": {
            "type": "array",
            "items": _closed(
                {"name": {"type": "string"}, "point": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}},
                ["name", "point"],
            ),
        },
        "output": _closed({"vtk_path": {"type": "string"}, "report_path": {"type": "string"}}),
    },
    ["mesh", "direction", "material"],
)


class ConfigError(ValueError):
    """Schema or consistency violation; ``path`` points at the offending key."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


def _path(parts) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def validate(doc: dict) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc))
    if err is not None:
        raise ConfigError(err.message, _path(err.absolute_path))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.sub.0=value`` overrides; values parse as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", item)
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for i, part in enumerate(parts[:-1]):
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {} if not parts[i + 1].isdigit() else [])
        last = parts[-1]
        if isinstance(node, list):
            idx = int(last)
            if idx == len(node):
                node.append(_parse_value(text))
            else:
                node[idx] = _parse_value(text)
        else:
            node[last] = _parse_value(text)
    return doc


def load(path, overrides=()) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    doc = apply_overrides(doc, overrides)
    validate(doc)
    return doc


def build_mesh(spec: dict, base_dir: Path | None = None) -> Mesh:
    gen = spec["generator"]
    if gen == "box":
        return generate_box_mesh(tuple(spec.get("extents", (1.0, 1.0, 1.0))), tuple(spec.get("divisions", (1, 1, 1))))
    if gen == "cylinder":
        return generate_cylinder_mesh(spec["length"], spec["diameter"], spec["axial_divisions"], spec["radial_layers"])
    if gen == "unit_tet":
        return generate_unit_tetrahedron()
    path = Path(spec["path"])
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return read_gmsh(path)


def build_material(spec: dict, formulation: str | None) -> MaterialSpec:
    kind = MaterialKind(spec["kind"])
    if formulation == "mixed" and not kind.mixed:
        kind = MaterialKind(kind.value + "_mixed")
    elif formulation == "displacement" and kind.mixed:
        raise ConfigError(f"material kind {kind.value} needs the mixed formulation", "formulation")
    d1 = spec.get("d1", 0.0)
    if spec.get("d1_convention", "coefficient") == "abaqus":
        if d1 <= 0:
            raise ConfigError("Abaqus D1 must be positive", "material.d1")
        d1 = 1.0 / d1
    try:
        return MaterialSpec(
            kind,
            mu=spec.get("mu", 0.0),
            lmbda=spec.get("lambda", 0.0),
            c1=spec.get("c1", 0.0),
            c2=spec.get("c2", 0.0),
            d1=d1,
            rho0=spec.get("rho0", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "material") from None


@dataclass(frozen=True)
class RunConfig:
    """A validated run: the problem, the run direction and output locations."""

    problem: ProblemConfig
    direction: str
    iga: IGASettings
    probes: tuple = ()
    vtk_path: str = "result.vtk"
    report_path: str = "report.json"
    document: dict | None = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        validate(doc)
        mesh = build_mesh(doc["mesh"], base_dir)
        formulation = doc.get("formulation")
        material = build_material(doc["material"], formulation)
        degree = doc.get("degree", 2)
        if material.mixed and degree != 2:
            raise ConfigError("the mixed formulation uses P2 displacement", "degree")
        s = doc.get("solver", {})
        try:
            solver = SolverSettings(
                newton_tolerance=s.get("tol", 1e-10),
                relative_tolerance=s.get("rtol", 1e-12),
                max_newton_iterations=s.get("max_iter", 25),
                continuation_steps=s.get("continuation_steps", 1),
                max_step_bisections=s.get("max_bisections", 8),
            )
            dirichlet = tuple(
                DirichletBC(d["tag"], tuple(str(e) for e in d["exprs"]), tuple(d.get("components", (True, True, True))))
                for d in doc.get("dirichlet", ())
            )
            tractions = tuple(Traction(t["tag"], tuple(str(e) for e in t["exprs"])) for t in doc.get("tractions", ()))
        except ValueError as exc:
            raise ConfigError(str(exc), "dirichlet") from None
        bf = doc.get("body_force")
        problem = ProblemConfig(
            mesh,
            material,
            degree=degree,
            dirichlet=dirichlet,
            tractions=tractions,
            body_force=tuple(str(e) for e in bf) if bf is not None else None,
            solver=solver,
            quad_degree=doc.get("quadrature_degree", 4),
        )
        try:
            problem.problem("forward")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        it = doc.get("iga", {})
        out = doc.get("output", {})
        return cls(
            problem,
            doc["direction"],
            IGASettings(it.get("epsilon", 1e-6), it.get("max_iterations", 50)),
            tuple((p["name"], tuple(p["point"])) for p in doc.get("probes", ())),
            out.get("vtk_path", "result.vtk"),
            out.get("report_path", "report.json"),
            doc,
        )
