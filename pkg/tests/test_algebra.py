import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, make_group, make_synthetic_dataset
from mlas2.algebra import (
    CompositionExpr,
    CompositionParseError,
    CompositionTerm,
    MixAlignmentError,
    concat,
    concat_many,
    materialize,
    mix,
    parse_composition,
    render_composition,
    transfer,
)
from mlas2.dataset import validate_dataset
from mlas2.translation import MockTranslator

from test_translation import CountingTranslator


def terms(expr):
    return [(t.q_lang, t.t_lang) for t in parse_composition(expr).terms]


# ---------------------------------------------------------------------------
# composition expressions
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "expr,expected",
    [
        ("En", [("en", "en")]),
        ("En+De", [("en", "en"), ("de", "de")]),
        ("EnDe+DeEn", [("en", "de"), ("de", "en")]),
        ("En+EnDe+De+DeEn", [("en", "en"), ("en", "de"), ("de", "de"), ("de", "en")]),
        ("En+De+Fr+Es+It", [("en", "en"), ("de", "de"), ("fr", "fr"), ("es", "es"), ("it", "it")]),
        ("En+De+Fr", [("en", "en"), ("de", "de"), ("fr", "fr")]),
        ("En+De+Fr+Es", [("en", "en"), ("de", "de"), ("fr", "fr"), ("es", "es")]),
        ("EnDe", [("en", "de")]),
        ("DeEn", [("de", "en")]),
        ("EnEn", [("en", "en")]),
        ("EnEn+EnDe", [("en", "en"), ("en", "de")]),
        ("DeDe+DeEn", [("de", "de"), ("de", "en")]),
        ("En+EnDe+ De+DeEn", [("en", "en"), ("en", "de"), ("de", "de"), ("de", "en")]),
        ("Mu", [("mu", "mu")]),
        ("Eng+Deu", [("eng", "eng"), ("deu", "deu")]),
        ("EngDeu", [("eng", "deu")]),
    ],
)
def test_parse_goldens(expr, expected):
    assert terms(expr) == expected


@pytest.mark.parametrize(
    "expr",
    ["", "   ", "En+", "+En", "En++De", "enDe", "E", "EN", "X1", "EnDeFr", "Abcdefghi", "En De", "En-De"],
)
def test_parse_rejects_malformed(expr):
    with pytest.raises(CompositionParseError):
        parse_composition(expr)


def test_render_round_trip_examples():
    for expr in ("En", "En+De", "EnDe+DeEn", "En+EnDe+De+DeEn"):
        assert render_composition(parse_composition(expr)) == expr


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["en", "de", "fr", "es", "it"]), st.sampled_from(["en", "de", "fr"])),
        min_size=1,
        max_size=5,
    )
)
def test_parse_render_identity_on_canonical(pairs):
    expr = CompositionExpr(tuple(CompositionTerm(q, t) for q, t in pairs))
    assert parse_composition(render_composition(expr)) == expr


def test_empty_expr_object_rejected():
    with pytest.raises(ValueError):
        CompositionExpr(())


# ---------------------------------------------------------------------------
# transfer
# ---------------------------------------------------------------------------

def test_transfer_translates_and_extends_provenance(tiny_dataset):
    out = transfer(tiny_dataset, MockTranslator(), "de")
    assert out.groups[0].question.text == "de:what de:color de:is de:the de:sky"
    for group in out.groups:
        assert group.question.provenance == ("en", "de")
        for cand in group.candidates:
            assert cand.language == "de"
            assert cand.provenance == ("en", "de")


def test_transfer_preserves_structure(tiny_dataset):
    out = transfer(tiny_dataset, MockTranslator(), "de")
    assert len(out.groups) == len(tiny_dataset.groups)
    for before, after in zip(tiny_dataset.groups, out.groups):
        assert after.question.id == before.question.id
        assert after.question.origin_id == before.question.origin_id
        assert [c.id for c in after.candidates] == [c.id for c in before.candidates]
        assert [c.label for c in after.candidates] == [c.label for c in before.candidates]
        assert [c.origin_id for c in after.candidates] == [c.origin_id for c in before.candidates]


def test_transfer_round_trip_restores_texts():
    d = make_synthetic_dataset(50)
    back = transfer(transfer(d, MockTranslator(), "de"), MockTranslator(), "en")
    for before, after in zip(d.groups, back.groups):
        assert after.question.text == before.question.text
        assert after.question.provenance == ("en", "de", "en")
        for b, a in zip(before.candidates, after.candidates):
            assert a.text == b.text
            assert a.provenance == ("en", "de", "en")


def test_transfer_to_same_language_is_noop(tiny_dataset):
    counting = CountingTranslator(MockTranslator())
    out = transfer(tiny_dataset, counting, "en")
    assert out == tiny_dataset
    assert counting.batch_calls == 0


def test_transfer_empty_dataset():
    empty = make_dataset([], name="En")
    out = transfer(empty, MockTranslator(), "de")
    assert out.groups == ()


# ---------------------------------------------------------------------------
# mix
# ---------------------------------------------------------------------------

def test_mix_takes_questions_and_candidates_from_operands(tiny_dataset):
    d_de = transfer(tiny_dataset, MockTranslator(), "de")
    mixed = mix(tiny_dataset, d_de)
    assert len(mixed.groups) == len(tiny_dataset.groups)
    for group, orig in zip(mixed.groups, tiny_dataset.groups):
        assert group.question.language == "en"
        assert group.question.text == orig.question.text
        assert len(group.candidates) == len(orig.candidates)
        for cand in group.candidates:
            assert cand.language == "de"
            assert cand.text.startswith("de:")
            assert all(tok.startswith("de:") for tok in cand.text.split())


def test_mix_self_is_identity(tiny_dataset):
    mixed = mix(tiny_dataset, tiny_dataset)
    assert mixed.groups == tiny_dataset.groups


def test_mix_labels_come_from_candidate_operand(tiny_dataset):
    d_de = transfer(tiny_dataset, MockTranslator(), "de")
    mixed = mix(d_de, tiny_dataset)
    for group, orig in zip(mixed.groups, tiny_dataset.groups):
        assert group.question.language == "de"
        assert [c.label for c in group.candidates] == [c.label for c in orig.candidates]
        assert [c.language for c in group.candidates] == ["en"] * len(orig.candidates)


def test_mix_reports_first_missing_origin(tiny_dataset):
    smaller = make_dataset([tiny_dataset.groups[0]])
    with pytest.raises(MixAlignmentError, match="'q2' missing"):
        mix(tiny_dataset, smaller)
    with pytest.raises(MixAlignmentError, match="'q2' missing"):
        mix(smaller, tiny_dataset)


def test_mix_rejects_duplicate_origin():
    from dataclasses import replace

    g1 = make_group("q1", "question one", [("a", 1)])
    g2 = make_group("q2", "question two", [("b", 0)])
    # two groups sharing a question origin_id make the join ambiguous
    clash = make_dataset([g1, replace(g2, question=replace(g2.question, origin_id="q1"))])
    with pytest.raises(MixAlignmentError, match="duplicate question origin_id"):
        mix(clash, clash)


def test_mix_rejects_mismatched_candidates(tiny_dataset):
    from dataclasses import replace

    other = transfer(tiny_dataset, MockTranslator(), "de")
    g0 = other.groups[0]
    changed = replace(
        g0,
        candidates=tuple(replace(c, origin_id=c.origin_id + "X") for c in g0.candidates),
    )
    broken = make_dataset([changed, other.groups[1]], name=other.name)
    with pytest.raises(MixAlignmentError, match="candidate origin_id"):
        mix(tiny_dataset, broken)


# ---------------------------------------------------------------------------
# concat
# ---------------------------------------------------------------------------

def test_concat_sizes_add(tiny_dataset):
    d_de = transfer(tiny_dataset, MockTranslator(), "de")
    both = concat(tiny_dataset, d_de)
    assert len(both.groups) == 4
    assert both.num_candidates() == 10


def test_concat_rekeys_and_validates(tiny_dataset):
    d_de = transfer(tiny_dataset, MockTranslator(), "de")
    both = concat(tiny_dataset, d_de)
    assert validate_dataset(both) == []
    assert [g.question.id for g in both.groups] == ["q1#0", "q2#0", "q1#1", "q2#1"]
    # origin ids survive re-keying
    assert [g.question.origin_id for g in both.groups] == ["q1", "q2", "q1", "q2"]
    for group in both.groups:
        for cand in group.candidates:
            assert cand.question_id == group.question.id


def test_concat_with_empty(tiny_dataset):
    out = concat(tiny_dataset, make_dataset([], name="empty"))
    assert len(out.groups) == len(tiny_dataset.groups)
    assert [g.question.origin_id for g in out.groups] == ["q1", "q2"]


def group_signature(dataset):
    return sorted(
        (
            g.question.origin_id,
            g.question.provenance,
            g.question.text,
            tuple((c.origin_id, c.provenance, c.text, c.label) for c in g.candidates),
        )
        for g in dataset.groups
    )


def test_concat_associative_up_to_rekeying(tiny_dataset):
    a = tiny_dataset
    b = transfer(a, MockTranslator(), "de")
    c = transfer(a, MockTranslator(), "fr")
    left = concat(concat(a, b), c)
    right = concat(a, concat(b, c))
    assert group_signature(left) == group_signature(right)
    assert validate_dataset(left) == []
    assert validate_dataset(right) == []


def test_concat_many_requires_operands():
    with pytest.raises(ValueError):
        concat_many([])


# ---------------------------------------------------------------------------
# materialize
# ---------------------------------------------------------------------------

def test_materialize_identity(tiny_dataset):
    out = materialize(parse_composition("En"), tiny_dataset, MockTranslator())
    assert out == tiny_dataset  # fixture is already named "En"


def test_materialize_concat_of_languages(tiny_dataset):
    out = materialize(parse_composition("En+De"), tiny_dataset, MockTranslator())
    assert out.name == "En+De"
    assert len(out.groups) == 4
    langs = [g.question.language for g in out.groups]
    assert langs.count("en") == 2 and langs.count("de") == 2
    assert validate_dataset(out) == []


def test_materialize_mixed_terms(tiny_dataset):
    out = materialize(parse_composition("EnDe+DeEn"), tiny_dataset, MockTranslator())
    assert len(out.groups) == 4
    seen = [(g.question.language, {c.language for c in g.candidates}) for g in out.groups]
    assert seen.count(("en", {"de"})) == 2
    assert seen.count(("de", {"en"})) == 2
    # candidate texts in the EnDe half carry the mock "de:" prefix, questions do not
    ende_groups = [g for g in out.groups if g.question.language == "en"]
    for group in ende_groups:
        assert not group.question.text.startswith("de:")
        for cand in group.candidates:
            assert all(tok.startswith("de:") for tok in cand.text.split())
    assert validate_dataset(out) == []


def test_materialize_caches_transfers(tiny_dataset):
    counting = CountingTranslator(MockTranslator())
    materialize(parse_composition("En+EnDe+De+DeEn"), tiny_dataset, counting)
    # "de" is needed three times but translated once; "en" is the identity
    assert counting.batch_calls == 1
