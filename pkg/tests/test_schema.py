"""Payload validation, geometry aliases, catalog form round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcp.schema import (
    Alias,
    Array,
    Field,
    GEOMETRY_ALIASES,
    Map,
    Primitive,
    Timestamp,
    check_timestamp,
    schema_from_catalog_form,
    schema_to_catalog_form,
    validate,
)

POSE_LISTING = {
    "position": {"x": 1.23, "y": 4.56, "z": 0.00},
    "orientation": {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0},
    "frame_id": "map",
    "timestamp": "2025-05-29T14:12:04Z",
}


def test_pose_listing_validates():
    report = validate(POSE_LISTING, Alias("Pose"))
    assert report.valid, report.describe()


def test_missing_required_field_is_located():
    report = validate({"position": {"x": 1.23, "y": 4.56}}, Alias("Pose"))
    assert not report.valid
    locations = {v.path for v in report.violations}
    assert "position.z" in locations
    # the other three required pose fields are reported too
    assert {"orientation", "frame_id", "timestamp"} <= locations


def test_unknown_field_rejected():
    doc = dict(POSE_LISTING, extra_field=1)
    report = validate(doc, Alias("Pose"))
    assert not report.valid
    assert report.violations[0].expected == "no such field"


@pytest.mark.parametrize("value,schema,ok", [
    (2, Primitive("float"), True),        # int literal widens to float
    (2.0, Primitive("float"), True),
    (2.5, Primitive("int"), False),       # never float -> int
    (2, Primitive("int"), True),
    (True, Primitive("int"), False),      # bool is not a number
    (True, Primitive("float"), False),
    (False, Primitive("bool"), True),
    (1, Primitive("bool"), False),
    ("2", Primitive("float"), False),
    ("x", Primitive("string"), True),
    (None, Primitive("string"), False),
])
def test_numeric_widening_table(value, schema, ok):
    assert validate(value, schema).valid is ok


def test_arrays_locate_violations():
    report = validate([1.0, "two", 3.0], Array(Primitive("float")))
    assert not report.valid
    assert report.violations[0].path == "[1]"


def test_nested_location_strings():
    schema = Map((Field("points", Array(Alias("Vector3"))),))
    report = validate({"points": [{"x": 1, "y": 2, "z": "no"}]}, schema)
    assert [v.path for v in report.violations] == ["points[0].z"]


def test_validation_is_idempotent():
    for value in (POSE_LISTING, {"position": {}}, 42):
        first = validate(value, Alias("Pose"))
        second = validate(value, Alias("Pose"))
        assert first == second


def test_alias_equivalent_to_hand_expansion():
    hand_expanded = GEOMETRY_ALIASES["Pose"]
    for value in (POSE_LISTING, {"position": 1}, {}, [1]):
        assert validate(value, Alias("Pose")) == validate(value, hand_expanded)


def test_quaternion_norm_not_checked():
    doc = dict(POSE_LISTING, orientation={"x": 9.0, "y": 9.0, "z": 9.0, "w": 9.0})
    assert validate(doc, Alias("Pose")).valid  # type-level only


def test_timestamps():
    assert check_timestamp("2025-05-29T14:12:04Z")
    assert check_timestamp(1748527924)
    assert check_timestamp(0)
    assert not check_timestamp(-5)
    assert not check_timestamp("yesterday")
    assert not check_timestamp(True)
    assert not check_timestamp(1.5)


def test_epoch_accepted_in_pose_timestamp():
    doc = dict(POSE_LISTING, timestamp=1748527924)
    assert validate(doc, Alias("Pose")).valid


# --- catalog form ---------------------------------------------------------------

def test_primitive_catalog_form():
    assert schema_to_catalog_form(Primitive("float")) == {"type": "float"}


def test_pose_catalog_form_is_expanded():
    form = schema_to_catalog_form(Alias("Pose"))
    assert form["alias"] == "Pose"
    assert form["type"] == "map"
    assert set(form["fields"]) == {"position", "orientation", "frame_id", "timestamp"}
    assert form["fields"]["position"]["type"] == "map"


schemas = st.recursive(
    st.one_of(
        st.sampled_from([Primitive(p) for p in ("int", "float", "bool", "string")]),
        st.just(Timestamp()),
        st.sampled_from([Alias(name) for name in GEOMETRY_ALIASES]),
    ),
    lambda children: st.one_of(
        st.builds(Array, children),
        st.builds(
            lambda fields: Map(tuple(fields)),
            st.lists(
                st.builds(
                    Field,
                    name=st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True),
                    schema=children,
                    required=st.booleans(),
                ),
                max_size=4,
                unique_by=lambda f: f.name,
            ),
        ),
    ),
    max_leaves=12,
)


@given(schemas)
@settings(max_examples=150)
def test_catalog_round_trip(schema):
    assert schema_from_catalog_form(schema_to_catalog_form(schema)) == schema


def test_accel_alias_exists():
    # declared for completeness; no shipped path uses it
    report = validate({"linear": {"x": 0, "y": 0, "z": 0},
                       "angular": {"x": 0, "y": 0, "z": 0}}, Alias("Accel"))
    assert report.valid
