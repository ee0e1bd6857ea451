import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupforge.exceptions import InfeasibleConfig, InvalidKind, MissingProvenance
from dupforge.model import Attribute, EnrichedSchema, Schema, SemanticType
from dupforge.preconfig import (CopySpec, GenerationConfig, HighLevelParams, PollutionNode, adapt_parameters,
                                copy_graph_acyclic, expand_pollution_hierarchy, measure_pollution,
                                topological_sources)

from conftest import make_config


def schema3():
    attrs = [Attribute("a", "person-name"), Attribute("b", "person-name"), Attribute("c", "person-name")]
    return EnrichedSchema(Schema("relational", attrs), [], {p: SemanticType("person-name", 1.0) for p in "abc"})


def tree(root, classes, overrides=None):
    overrides = overrides or {}
    attrs = [PollutionNode(p, "attribute", overrides.get(p), [PollutionNode(c, "error-class") for c in classes])
             for p in "abc"]
    return PollutionNode("dataset", "dataset", root, [
        PollutionNode("s0", "source", None, [PollutionNode("records", "table", None, attrs)])])


def test_zero_root_budget():
    out = expand_pollution_hierarchy(tree(0.0, ["typo", "missing"]), schema3())
    assert set(out.values()) == {0.0}


def test_attribute_override_inherits_downwards():
    w = {"person-name": {"typo": 1, "missing": 1}}
    out = expand_pollution_hierarchy(tree(0.3, ["typo", "missing"], {"a": 0.6}), schema3(), w)
    assert out[("s0", "a", "typo")] == pytest.approx(0.3)
    assert out[("s0", "a", "missing")] == pytest.approx(0.3)
    for p in "bc":
        assert out[("s0", p, "typo")] == pytest.approx(0.15)
        assert out[("s0", p, "missing")] == pytest.approx(0.15)


def test_weights_split_the_budget():
    w = {"person-name": {"typo": 0.5, "missing": 0.25, "format_change": 0.25}}
    out = expand_pollution_hierarchy(tree(0.2, ["typo", "missing", "format_change"]), schema3(), w)
    assert out[("s0", "a", "typo")] == pytest.approx(0.10)
    assert out[("s0", "a", "missing")] == pytest.approx(0.05)
    assert out[("s0", "a", "format_change")] == pytest.approx(0.05)


def test_levels_must_descend():
    with pytest.raises(ValueError):
        PollutionNode("x", "attribute", None, [PollutionNode("s", "source")])


budgets = st.one_of(st.none(), st.floats(0, 1))


@st.composite
def trees(draw):
    classes = draw(st.lists(st.sampled_from(["typo", "missing", "phonetic", "format_change"]),
                            min_size=1, max_size=4, unique=True))

    def attrs():
        return [PollutionNode(p, "attribute", draw(budgets), [PollutionNode(c, "error-class") for c in classes])
                for p in "abc"]

    sources = [PollutionNode(f"s{i}", "source", draw(budgets), [PollutionNode("records", "table", draw(budgets), attrs())])
               for i in range(draw(st.integers(1, 2)))]
    return PollutionNode("dataset", "dataset", draw(st.floats(0, 1)), sources)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.lists(st.sampled_from(["typo", "missing", "phonetic"]), min_size=1, unique=True))
def test_leaves_sum_to_root_without_overrides(root, classes):
    out = expand_pollution_hierarchy(tree(root, classes), schema3())
    for p in "abc":
        assert sum(v for (s, q, c), v in out.items() if q == p) == pytest.approx(root)


def _nodes(node, path=()):
    yield path, node
    for i, c in enumerate(node.children):
        if c.level != "error-class":
            yield from _nodes(c, path + (i,))


def _at(root, path):
    node = root
    for i in path:
        node = node.children[i]
    return node


def _leaves_under(node, path, source=None):
    """Leaf keys of the subtree rooted at ``node``."""
    if node.level == "source":
        source = node.name
    if node.level == "attribute":
        return {(source, node.name, c.name) for c in node.children}
    out = set()
    for c in node.children:
        out |= _leaves_under(c, path, source)
    return out


@settings(max_examples=200, deadline=None)
@given(trees(), st.data())
def test_expansion_is_monotone(t, data):
    base = expand_pollution_hierarchy(t, schema3())
    candidates = list(_nodes(t))
    path, _ = data.draw(st.sampled_from(candidates))
    raised = copy.deepcopy(t)
    node = _at(raised, path)
    old = node.budget if node.budget is not None else 0.0
    node.budget = data.draw(st.floats(old, 1))
    # the source context of a subtree is fixed by its ancestors
    src = None
    if path:
        src = _at(raised, path[:1]).name
    inside = _leaves_under(node, path, src)
    after = expand_pollution_hierarchy(raised, schema3())
    for key, v in after.items():
        if key in inside:
            # an unset budget inherited from above may have been higher than the new explicit one
            if _at(t, path).budget is not None:
                assert v >= base[key] - 1e-12
        else:
            assert v == base[key]


# -- derivation ---------------------------------------------------------------------------


def test_zero_heterogeneity_gives_identical_schemas(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, heterogeneity=0.0)
    for s in cfg.sources:
        for p in s.profiles:
            assert p.representation.mapping == []
    assert len(cfg.sources) == 3


def test_zero_copy_intensity(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=0.0)
    assert cfg.copies == []


def test_derivation_is_deterministic(people_prepared):
    kw = dict(scenario_kind="integration", n_sources=3, heterogeneity=0.7, copy_intensity=0.5, seed=9)
    assert make_config(people_prepared, **kw).dumps() == make_config(people_prepared, **kw).dumps()


def test_heterogeneity_diverges_schemas(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, heterogeneity=1.0, seed=2)
    mappings = [s.profiles[0].representation.mapping for s in cfg.sources]
    assert all(mappings)
    assert len(cfg.sources[0].profiles) == 3


def test_integration_emits_target_profiles(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="integration", n_sources=2, integration_targets=3)
    assert [p.name for p in cfg.integration_profiles] == ["target_0", "target_1", "target_2"]


def test_config_round_trip(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, heterogeneity=0.5, copy_intensity=1.0)
    again = GenerationConfig.loads(cfg.dumps())
    assert again.dumps() == cfg.dumps()
    assert again.digest() == cfg.digest()


@pytest.mark.parametrize("kw", [dict(duplicate_rate=1.0), dict(n_sources=2), dict(degree_of_pollution=1.5),
                                dict(volume_factor=0)])
def test_invalid_params(kw):
    with pytest.raises(InfeasibleConfig):
        HighLevelParams(**kw)


def test_invalid_kind():
    with pytest.raises(InvalidKind):
        HighLevelParams(scenario_kind="merging")


def test_cyclic_copies_rejected(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=2)
    cfg.copies = [CopySpec(0, 1, 0, None, {"kind": "on-change"}, ["id"]),
                  CopySpec(1, 0, 0, None, {"kind": "on-change"}, ["id"])]
    with pytest.raises(InfeasibleConfig):
        cfg.validate()


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.floats(0, 1), st.integers(0, 1000))
def test_generated_copy_graphs_are_acyclic(people_prepared, n, intensity, seed):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=n, copy_intensity=intensity, seed=seed,
                      heterogeneity=0.0)
    assert copy_graph_acyclic(cfg.copies, n)
    order = topological_sources(cfg.copies, n)
    rank = {s: i for i, s in enumerate(order)}
    assert sorted(order) == list(range(n))
    assert all(rank[c.origin] < rank[c.target] for c in cfg.copies)


# -- measure and adaptation ----------------------------------------------------------------


def test_faithful_projection_measures_zero():
    clean = {1: {"a": "x", "b": "y"}}
    assert measure_pollution(clean, [("r1", {"a": "x", "b": "y"})], {"r1": 1}) == 0.0


def test_all_cells_corrupted():
    clean = {1: {"a": "x", "b": "y"}}
    assert measure_pollution(clean, [("r1", {"a": "q", "b": None})], {"r1": 1}) == 1.0


def test_two_of_ten_cells():
    clean = {1: dict(zip("abcde", "12345")), 2: dict(zip("abcde", "67890"))}
    polluted = [("r1", dict(zip("abcde", "1x345"))), ("r2", dict(zip("abcde", "6789y")))]
    alignment = [{"record_id": "r1", "entity_id": 1}, {"record_id": "r2", "entity_id": 2}]
    assert measure_pollution(clean, polluted, alignment) == pytest.approx(0.2)


def test_unlinked_record_rejected():
    with pytest.raises(MissingProvenance):
        measure_pollution({1: {"a": 1}}, [("r9", {"a": 1})], {})


def _leaves(cfg):
    return [v for s in cfg.sources for p in s.profiles for classes in p.errors.leaf.values() for v in classes.values()]


def test_adapt_noop_at_target(people_prepared):
    cfg = make_config(people_prepared)
    assert adapt_parameters(0.2, 0.2, cfg).dumps() == cfg.dumps()


def test_adapt_doubles_budgets(people_prepared):
    cfg = make_config(people_prepared)
    out = adapt_parameters(0.2, 0.1, cfg)
    for a, b in zip(_leaves(cfg), _leaves(out)):
        assert b == pytest.approx(min(1.0, 2 * a))


def test_adapt_guards_zero_measure(people_prepared):
    cfg = make_config(people_prepared)
    out = adapt_parameters(0.2, 0.0, cfg)
    for a, b in zip(_leaves(cfg), _leaves(out)):
        assert b == pytest.approx(min(1.0, 2 * a))


def test_adapt_single_source(people_prepared):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=2)
    out = adapt_parameters(0.2, 0.4, cfg, source=1)
    assert out.sources[0].to_dict() == cfg.sources[0].to_dict()
    assert out.sources[1].to_dict() != cfg.sources[1].to_dict()
