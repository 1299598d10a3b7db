"""Path grammar, registration constraints, discovery catalogs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcp.registry import (
    CATEGORY_OPS,
    Registry,
    ResourceDescriptor,
    ResourcePath,
    is_path_prefix,
    parse_path,
)
from rcp.schema import Map, Primitive
from rcp.wire import ErrorCode, Op, ProtocolError


def make_desc(path, ops, input_schema=None):
    return ResourceDescriptor(
        path=parse_path(path),
        supported_ops=frozenset(ops),
        description=f"test resource at {path}",
        input_schema=input_schema,
    )


# --- parsing --------------------------------------------------------------------

def test_parse_tenant_path():
    p = parse_path("/tenant/alpha/sensor/pose")
    assert p == ResourcePath("alpha", "sensor", ("pose",))
    assert str(p) == "/tenant/alpha/sensor/pose"


def test_parse_default_namespace():
    p = parse_path("/param/speed_limit")
    assert p.tenant is None
    assert p.category == "param"
    assert p.segments == ("speed_limit",)


@pytest.mark.parametrize("bad", [
    "/Sensor/Pose",            # uppercase
    "sensor/pose",             # no leading slash
    "/sensor",                 # missing segment
    "/widget/pose",            # unknown category
    "/tenant/alpha",           # tenant prefix without resource
    "/sensor//pose",           # empty token
    "/sensor/po se",           # bad character
    "/tenant/",                # tenant without name
    "/",
    "",
])
def test_parse_rejects(bad):
    with pytest.raises(ProtocolError) as exc:
        parse_path(bad)
    assert exc.value.code is ErrorCode.MALFORMED


token = st.from_regex(r"[a-z0-9_]{1,8}", fullmatch=True)


@st.composite
def resource_paths(draw):
    tenant = draw(st.one_of(st.none(), token.filter(lambda t: t != "tenant")))
    category = draw(st.sampled_from(sorted(CATEGORY_OPS)))
    segments = tuple(draw(st.lists(token, min_size=1, max_size=3)))
    return ResourcePath(tenant, category, segments)


@given(resource_paths())
@settings(max_examples=150)
def test_print_parse_inverse(path):
    assert parse_path(str(path)) == path


def test_parse_normalizes_trailing_slash():
    assert str(parse_path("/sensor/pose/")) == "/sensor/pose"


# --- prefixes -------------------------------------------------------------------

def test_prefix_matching_is_segment_aligned():
    assert is_path_prefix("/tenant/alpha", "/tenant/alpha/sensor/pose")
    assert is_path_prefix("/tenant/alpha", "/tenant/alpha")
    assert not is_path_prefix("/tenant/alpha", "/tenant/alphabet/sensor/pose")
    assert is_path_prefix("/", "/anything/at/all")


# --- registration ----------------------------------------------------------------

def test_register_and_resolve():
    reg = Registry()
    desc = make_desc("/sensor/pose", {Op.READ, Op.SUBSCRIBE})
    reg.register(desc)
    assert reg.resolve("/sensor/pose", Op.READ) is desc


def test_duplicate_registration_conflicts():
    reg = Registry()
    reg.register(make_desc("/sensor/pose", {Op.READ}))
    with pytest.raises(ProtocolError) as exc:
        reg.register(make_desc("/sensor/pose", {Op.READ}))
    assert exc.value.code is ErrorCode.CONFLICT


def test_resolve_unknown_path():
    with pytest.raises(ProtocolError) as exc:
        Registry().resolve("/sensor/ghost", Op.READ)
    assert exc.value.code is ErrorCode.UNKNOWN_PATH


def test_resolve_unsupported_op():
    reg = Registry()
    reg.register(make_desc("/sensor/pose", {Op.READ, Op.SUBSCRIBE}))
    with pytest.raises(ProtocolError) as exc:
        reg.resolve("/sensor/pose", Op.WRITE)
    assert exc.value.code is ErrorCode.OP_NOT_SUPPORTED


@pytest.mark.parametrize("path,ops", [
    ("/sensor/pose", {Op.WRITE}),
    ("/sensor/pose", {Op.EXECUTE}),
    ("/param/speed", {Op.EXECUTE}),
    ("/event/boot", {Op.READ}),
    ("/service/reset", {Op.READ}),
])
def test_category_constrains_ops(path, ops):
    reg = Registry()
    with pytest.raises(ValueError):
        reg.register(make_desc(path, ops, input_schema=Map(())))


def test_execute_requires_input_schema():
    with pytest.raises(ValueError):
        Registry().register(make_desc("/service/reset", {Op.EXECUTE}))
    # with a schema it registers fine
    Registry().register(make_desc("/service/reset", {Op.EXECUTE}, input_schema=Map(())))


def test_require_tenancy_flag():
    reg = Registry(require_tenancy=True)
    with pytest.raises(ValueError):
        reg.register(make_desc("/sensor/pose", {Op.READ}))
    reg.register(make_desc("/tenant/alpha/sensor/pose", {Op.READ}))


# --- discovery -------------------------------------------------------------------

def test_empty_catalog():
    catalog = Registry().discover()
    assert catalog.resources == ()


def test_catalog_scoped_to_tenant():
    reg = Registry()
    for tenant in ("alpha", "beta"):
        reg.register(make_desc(f"/tenant/{tenant}/sensor/pose", {Op.READ}))
    alpha = {str(r.path) for r in reg.discover(scope="alpha").resources}
    beta = {str(r.path) for r in reg.discover(scope="beta").resources}
    assert alpha == {"/tenant/alpha/sensor/pose"}
    assert alpha.isdisjoint(beta)


@given(st.lists(resource_paths(), min_size=1, max_size=20, unique_by=str), st.randoms())
@settings(max_examples=50)
def test_catalog_complete_and_sorted(paths, rnd):
    reg = Registry()
    shuffled = list(paths)
    rnd.shuffle(shuffled)
    for p in shuffled:
        ops = {next(iter(CATEGORY_OPS[p.category]))}
        schema = Map(()) if Op.EXECUTE in ops else None
        reg.register(ResourceDescriptor(path=p, supported_ops=frozenset(ops),
                                        description="r", input_schema=schema))
    catalog = reg.discover()
    listed = [str(r.path) for r in catalog.resources]
    assert listed == sorted(str(p) for p in paths)
    for r in catalog.resources:  # every entry resolves
        assert reg.resolve(r.path, next(iter(r.supported_ops))) is r


def test_catalog_wire_form_embeds_schemas():
    reg = Registry()
    reg.register(make_desc("/param/speed", {Op.READ, Op.WRITE},
                           input_schema=Primitive("float")))
    doc = reg.discover(now="2025-05-29T14:12:04Z").to_wire()
    assert doc["generated_at"] == "2025-05-29T14:12:04Z"
    entry = doc["resources"][0]
    assert entry["path"] == "/param/speed"
    assert entry["supported_ops"] == ["read", "write"]
    assert entry["input_schema"] == {"type": "float"}
