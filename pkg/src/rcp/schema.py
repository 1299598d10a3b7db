"""Payload type system: primitives, compounds, time, geometry, validation.

Schemas are small immutable trees. Geometry names (Pose, Vector3, ...)
are aliases that expand to fixed map schemas; validation and the portable
catalog form both work on the expansion, so an alias and its hand-expanded
equivalent are interchangeable.

Everything here is pure and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

PRIMITIVES = ("int", "float", "bool", "string")


@dataclass(frozen=True)
class SchemaNode:
    """Base class; use the concrete subclasses below."""

    def expand(self) -> "SchemaNode":
        return self


@dataclass(frozen=True)
class Primitive(SchemaNode):
    name: str  # one of PRIMITIVES

    def __post_init__(self):
        if self.name not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.name!r}")


@dataclass(frozen=True)
class Timestamp(SchemaNode):
    pass


@dataclass(frozen=True)
class Array(SchemaNode):
    element: SchemaNode

    def expand(self) -> "SchemaNode":
        return Array(self.element.expand())


@dataclass(frozen=True)
class Field:
    name: str
    schema: SchemaNode
    required: bool = True


@dataclass(frozen=True)
class Map(SchemaNode):
    fields: tuple[Field, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate field names in map schema: {names}")

    def expand(self) -> "SchemaNode":
        return Map(tuple(Field(f.name, f.schema.expand(), f.required) for f in self.fields))


@dataclass(frozen=True)
class Alias(SchemaNode):
    """A named geometry schema; expands acyclically to a Map."""

    name: str

    def __post_init__(self):
        if self.name not in GEOMETRY_ALIASES:
            raise ValueError(f"unknown geometry alias {self.name!r}")

    def expand(self) -> "SchemaNode":
        return GEOMETRY_ALIASES[self.name].expand()


def _vec3() -> Map:
    return Map(tuple(Field(axis, Primitive("float")) for axis in "xyz"))


def _quat() -> Map:
    return Map(tuple(Field(axis, Primitive("float")) for axis in "xyzw"))


GEOMETRY_ALIASES: dict[str, Map] = {
    "Vector3": _vec3(),
    "Quaternion": _quat(),
    "Pose": Map((
        Field("position", _vec3()),
        Field("orientation", _quat()),
        Field("frame_id", Primitive("string")),
        Field("timestamp", Timestamp()),
    )),
    "Twist": Map((
        Field("linear", _vec3()),
        Field("angular", _vec3()),
    )),
    # Listed among the geometry types but referenced by no shipped path.
    "Accel": Map((
        Field("linear", _vec3()),
        Field("angular", _vec3()),
    )),
}


@dataclass(frozen=True)
class Violation:
    path: str  # location inside the offending value, "" for the root
    expected: str
    found: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def describe(self) -> str:
        return "; ".join(f"{v.path or '<root>'}: expected {v.expected}, found {v.found}"
                         for v in self.violations)


def check_timestamp(value: Any) -> bool:
    """Accept ISO-8601 UTC strings ('...Z') or non-negative epoch seconds."""
    if isinstance(value, bool):
        return False
    if isinstance(value, int):
        return value >= 0
    if isinstance(value, str):
        from .wire import is_iso_utc
        return is_iso_utc(value)
    return False


def _found(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "map"
    return type(value).__name__


def _validate(value: Any, schema: SchemaNode, at: str, out: list[Violation]) -> None:
    if isinstance(schema, Alias):
        _validate(value, schema.expand(), at, out)
    elif isinstance(schema, Primitive):
        ok = {
            "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
            # int literals widen to float; the reverse never holds
            "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
            "bool": lambda v: isinstance(v, bool),
            "string": lambda v: isinstance(v, str),
        }[schema.name](value)
        if not ok:
            out.append(Violation(at, schema.name, _found(value)))
    elif isinstance(schema, Timestamp):
        if not check_timestamp(value):
            out.append(Violation(at, "timestamp", _found(value)))
    elif isinstance(schema, Array):
        if not isinstance(value, list):
            out.append(Violation(at, "array", _found(value)))
            return
        for i, item in enumerate(value):
            _validate(item, schema.element, f"{at}[{i}]" if at else f"[{i}]", out)
    elif isinstance(schema, Map):
        if not isinstance(value, dict):
            out.append(Violation(at, "map", _found(value)))
            return
        known = {f.name for f in schema.fields}
        for f in schema.fields:
            child = f"{at}.{f.name}" if at else f.name
            if f.name not in value:
                if f.required:
                    out.append(Violation(child, "required field", "missing"))
                continue
            _validate(value[f.name], f.schema, child, out)
        # payload maps are strict; envelope-level leniency lives in wire
        for key in value:
            if key not in known:
                out.append(Violation(f"{at}.{key}" if at else key, "no such field", _found(value[key])))
    else:  # pragma: no cover - exhaustive over the node types
        raise TypeError(f"not a schema node: {schema!r}")


def validate(value: Any, schema: SchemaNode) -> ValidationReport:
    """Check a decoded payload against a schema; never raises on bad values."""
    out: list[Violation] = []
    _validate(value, schema, "", out)
    return ValidationReport(tuple(out))


# --- portable catalog form ---------------------------------------------------

def schema_to_catalog_form(schema: SchemaNode) -> dict[str, Any]:
    """Self-describing descriptor for embedding in the discovery catalog.

    Aliases keep their name but carry the full expansion, so a client
    needs no alias table to interpret them.
    """
    if isinstance(schema, Alias):
        expanded = schema_to_catalog_form(GEOMETRY_ALIASES[schema.name])
        expanded["alias"] = schema.name
        return expanded
    if isinstance(schema, Primitive):
        return {"type": schema.name}
    if isinstance(schema, Timestamp):
        return {"type": "timestamp"}
    if isinstance(schema, Array):
        return {"type": "array", "element": schema_to_catalog_form(schema.element)}
    if isinstance(schema, Map):
        return {
            "type": "map",
            "fields": {f.name: schema_to_catalog_form(f.schema) for f in schema.fields},
            "required": [f.name for f in schema.fields if f.required],
        }
    raise TypeError(f"not a schema node: {schema!r}")


def schema_from_catalog_form(obj: Any) -> SchemaNode:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError(f"not a catalog-form schema: {obj!r}")
    if "alias" in obj:
        return Alias(obj["alias"])
    kind = obj["type"]
    if kind in PRIMITIVES:
        return Primitive(kind)
    if kind == "timestamp":
        return Timestamp()
    if kind == "array":
        return Array(schema_from_catalog_form(obj["element"]))
    if kind == "map":
        required = set(obj.get("required", []))
        fields = tuple(
            Field(name, schema_from_catalog_form(node), name in required)
            for name, node in obj["fields"].items()
        )
        return Map(fields)
    raise ValueError(f"unknown catalog-form type {kind!r}")
