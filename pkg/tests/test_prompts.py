import re
from fractions import Fraction

import pytest
from conftest import rating_schema

from peerchair.errors import EmptyPeerSet, InvalidSchema, MissingSlot, PromptError
from peerchair.models import PeerReview, ReviewOutcome, Sample, ScoreScale
from peerchair.prompts import (
    CommunicationStrategy,
    PromptSchema,
    Role,
    bundled_schema_dir,
    dump_schema,
    fill_slots,
    load_metric_schemas,
    load_schema,
    ordinal,
    render_area_chair_skeleton,
    render_prompt,
    validate_schema,
)

SAMPLE = Sample(id="x1", slots={"Context": "the weather talk", "Response": "it is sunny"})


def review(name, analysis, score):
    return PeerReview(name, ReviewOutcome(analysis=analysis, score=Fraction(score), raw=""))


def section_positions(text, markers):
    return [text.index(m) for m in markers]


def test_peer_section_order():
    schema = rating_schema(guidelines="- 1: poor\n- 3: great")
    text = render_prompt(schema, SAMPLE, Role.PEER)
    order = section_positions(text, [
        schema.task_intro, "Evaluation Criteria:", "Evaluation Steps:", "Evaluation Guidelines:",
        "Example:", "the weather talk", "Analysis:",
    ])
    assert order == sorted(order)


def test_bundled_engagingness_peer_layout():
    schemas = load_metric_schemas(bundled_schema_dir(), "topicalchat", "engagingness")
    sample = Sample("t", {"Conversation": "A: hi\nB: hello", "Contextual Fact": "cats purr", "Response": "nice"})
    text = render_prompt(schemas.peer, sample, Role.PEER)
    order = section_positions(text, [
        "Engagingness (1-3)", "Evaluation Steps:", "Evaluation Guidelines:", "Conversation History:",
        "Corresponding Fact:", "Response:\nnice", "Evaluation Form",
    ])
    assert order == sorted(order)
    assert text.endswith("Engagingness:\n")


def test_each_non_empty_section_appears_once():
    schema = rating_schema(guidelines="GUIDE-TOKEN")
    text = render_prompt(schema, SAMPLE, Role.PEER)
    for piece in (schema.task_intro, schema.criteria, "GUIDE-TOKEN", schema.eval_form, "Score it."):
        assert text.count(piece) == 1


def test_rendering_is_deterministic():
    schema = rating_schema()
    reviews = [review("a", "ok", 2)]
    assert render_prompt(schema, SAMPLE, "area_chair", reviews) == render_prompt(schema, SAMPLE, "area_chair", reviews)


def test_score_only_block():
    schema = rating_schema()
    reviews = [review("a", "alpha analysis", 2), review("b", "beta analysis", 3), review("c", "gamma analysis", 3)]
    text = render_prompt(schema, SAMPLE, Role.AREA_CHAIR, reviews, CommunicationStrategy.SCORE_ONLY)
    assert "First Assistant's Evaluation:\nRating: 2" in text
    assert "Second Assistant's Evaluation:\nRating: 3" in text
    assert "Third Assistant's Evaluation:\nRating: 3" in text
    for a in ("alpha", "beta", "gamma"):
        assert a not in text


def test_comment_only_block_has_no_score_digits():
    schema = rating_schema(scale=(0, 1000), criteria="Quality: how good it is.")
    text = render_prompt(schema, SAMPLE, Role.AREA_CHAIR, [review("a", "careful words", 737)],
                         CommunicationStrategy.COMMENT_ONLY)
    assert "careful words" in text
    assert "737" not in text


def test_both_includes_analysis_and_score():
    text = render_prompt(rating_schema(), SAMPLE, Role.AREA_CHAIR, [review("a", "thoughts", 2)], "both")
    assert "First Assistant's Evaluation:\nAnalysis: thoughts\nRating: 2" in text


def test_peer_render_independent_of_strategy():
    schema = rating_schema()
    outs = {render_prompt(schema, SAMPLE, Role.PEER, None, s) for s in CommunicationStrategy}
    assert len(outs) == 1


def test_render_errors():
    schema = rating_schema()
    with pytest.raises(MissingSlot) as info:
        render_prompt(schema, Sample("bad", {"Context": "c"}), Role.PEER)
    assert info.value.slot == "Response" and info.value.sample_id == "bad"
    with pytest.raises(EmptyPeerSet):
        render_prompt(schema, SAMPLE, Role.AREA_CHAIR, [])
    with pytest.raises(PromptError):
        render_prompt(schema, SAMPLE, Role.PEER, [review("a", "x", 1)])


def test_slot_values_are_not_re_expanded():
    out = fill_slots("{{A}} and {{B}}", {"A": "{{B}}", "B": "bee"})
    assert out == "{{B}} and bee"


def test_ordinals():
    assert [ordinal(i) for i in (0, 1, 2, 9, 10, 11, 20)] == [
        "First", "Second", "Third", "Tenth", "11th", "12th", "21st"]


def test_skeleton_keeps_peer_placeholders():
    text = render_area_chair_skeleton(rating_schema(), SAMPLE, 3)
    assert re.findall(r"\{\{Peer_response(\d)\}\}", text) == ["1", "2", "3"]


# validation


def test_bundled_schemas_are_valid():
    files = sorted(bundled_schema_dir().rglob("*.yaml"))
    assert len(files) == 20
    for path in files:
        assert validate_schema(load_schema(path)) == []


def test_validation_flags_missing_analysis_marker():
    issues = validate_schema(rating_schema(eval_form="Give Rating: <n>"))
    assert [i.field for i in issues] == ["eval_form"]


def test_validation_flags_duplicate_slots():
    issues = validate_schema(rating_schema(input_slots=("Context", "Context")))
    assert any(i.field == "input_slots" for i in issues)


def test_validation_flags_unknown_placeholder_and_stray_tokens():
    schema = rating_schema(input_template="{{Context}} {{Response}} {{Ghost}}", criteria="see {{Context}}")
    fields = {i.field for i in validate_schema(schema)}
    assert {"input_template", "criteria"} <= fields


def test_validation_needs_scale_and_one_marker():
    fields = {i.field for i in validate_schema(rating_schema(scale=None))}
    assert "scale" in fields
    two = rating_schema(eval_form="Analysis: ... Rating: x. Rating: y")
    assert any("exactly one" in i.rule for i in validate_schema(two))


def test_schema_file_round_trip(tmp_path):
    schema = rating_schema(guidelines="- 1: a\n- 2: b")
    dump_schema(schema, tmp_path / "s.yaml", Role.PEER)
    assert load_schema(tmp_path / "s.yaml") == schema


def test_invalid_schema_file(tmp_path):
    bad = rating_schema(eval_form="no markers here")
    dump_schema(bad, tmp_path / "bad.yaml")
    with pytest.raises(InvalidSchema):
        load_schema(tmp_path / "bad.yaml")


def test_from_dict_rejects_unknown_keys():
    data = rating_schema().to_dict()
    data["mystery"] = 1
    with pytest.raises(ValueError):
        PromptSchema.from_dict(data)


def test_scale_from_mapping():
    schema = rating_schema(scale=None)
    data = schema.to_dict()
    data["scale"] = {"min": 0, "max": 100}
    assert PromptSchema.from_dict(data).scale == ScoreScale(0, 100)
