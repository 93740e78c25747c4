import json
from fractions import Fraction

import pytest
from conftest import area_chair, handles, mock_gateway, rating_config, rating_dataset

from peerchair.errors import InsufficientPeers, InvalidConfig, ParseFailure
from peerchair.gateway import MockFailure
from peerchair.models import AnswerSpace, Dataset, DatasetKind, Sample
from peerchair.orchestrator import (
    Hyperparameters,
    RunConfig,
    Variant,
    default_hyperparameters,
    dry_run,
    evaluate_sample,
    run_dataset,
    run_reasoning,
)
from peerchair.prompts import (
    CommunicationStrategy,
    RoleSchemas,
    TaskKind,
    bundled_schema_dir,
    load_metric_schemas,
)
from peerchair.records import mask_volatile


def rating(score, analysis="fine"):
    return f"Analysis: {analysis}\nRating: {score}"


def script_peers(mock, scores, k=3):
    for i in range(k):
        mock.script("", [rating(scores[i % len(scores)], f"peer {i} view")], model=f"peer{i}")


# call accounting


@pytest.mark.parametrize("variant,n", [(Variant.TURBO, 20), (Variant.LITE, 1)])
def test_call_counts_and_request_sizes(mock, variant, n):
    mock.script("", [rating(2), rating(3)], model="chair")
    script_peers(mock, [1, 2, 3])
    cfg = rating_config(3, variant=variant)
    run = run_dataset(rating_dataset(5), ["quality"], cfg, mock_gateway(mock))
    assert mock.call_count == 5 * (3 + 1)
    assert [c.n for c in mock.calls_for("chair")] == [n] * 5
    assert all(c.n == 1 for c in mock.calls if c.model != "chair")
    assert not run.failures


def test_turbo_mean_of_scripted_scores(mock):
    mock.script("", [rating(2), rating(3)], model="chair")
    script_peers(mock, [2, 3, 3])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    assert v.ac.final_score == Fraction(5, 2)
    assert len(v.ac.responses) == 20


def test_lite_single_draw(mock):
    mock.script("", [rating(3, "chair says three")], model="chair")
    script_peers(mock, [2, 3, 3])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3, variant="lite"), mock_gateway(mock))
    assert v.ac.final_score == 3 and v.ac.final_comment == "chair says three"


def test_custom_n(mock):
    scores = [1, 2, 2, 3, 3]
    mock.script("", [rating(s) for s in scores], model="chair")
    script_peers(mock, [2])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3, n=5), mock_gateway(mock))
    assert v.ac.final_score == Fraction(sum(scores), 5)


def test_ledger_methods(mock):
    mock.script("", [rating(2)], model="chair")
    script_peers(mock, [2])
    run = run_dataset(rating_dataset(2), ["quality"], rating_config(3, variant="lite"), mock_gateway(mock))
    calls = {}
    for (method, _), entry in run.ledger.entries.items():
        calls[method] = calls.get(method, 0) + entry.calls
    assert calls == {"peer": 6, "area_chair": 2}


# degradation and failures


def test_failed_peer_is_dropped(mock):
    mock.script("", [rating(2)], model="chair")
    mock.script("", [MockFailure("down", retryable=False)], model="peer1")
    script_peers(mock, [3])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    assert v.dropped_peers == ("peer1",)
    assert [r.peer for r in v.peer_reviews] == ["peer0", "peer2"]
    assert v.ac.degraded
    assert "Third Assistant" not in v.prompts["area_chair"]


def test_insufficient_peers(mock):
    mock.script("", [rating(2)], model="chair")
    for name in ("peer0", "peer1"):
        mock.script("", [MockFailure("down", retryable=False)], model=name)
    script_peers(mock, [3])
    with pytest.raises(InsufficientPeers):
        evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    run = run_dataset(rating_dataset(2), ["quality"], rating_config(3), mock_gateway(mock))
    assert [v.error.stage for v in run.verdicts] == ["peers", "peers"]
    assert [v.error.kind for v in run.verdicts] == ["InsufficientPeers"] * 2
    with pytest.raises(InsufficientPeers):
        run_dataset(rating_dataset(2), ["quality"], rating_config(3), mock_gateway(mock), fail_fast=True)


def test_min_peers_override_allows_single_survivor(mock):
    mock.script("", [rating(2)], model="chair")
    for name in ("peer0", "peer1"):
        mock.script("", [MockFailure("down", retryable=False)], model=name)
    script_peers(mock, [3])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3, min_peers=1), mock_gateway(mock))
    assert len(v.peer_reviews) == 1


def test_peer_parse_failure_redraws_once(mock):
    mock.script("", [rating(2)], model="chair")
    mock.script("", ["no score here", rating(3)], model="peer0")
    script_peers(mock, [1])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    assert len(mock.calls_for("peer0")) == 2
    assert v.peer_reviews[0].outcome.score == 3 and not v.dropped_peers


def test_peer_parse_failure_twice_drops(mock):
    mock.script("", [rating(2)], model="chair")
    mock.script("", ["nothing"], model="peer0")
    script_peers(mock, [1])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    assert v.dropped_peers == ("peer0",)


def test_ac_parse_failure_redraw(mock):
    # the first of 20 draws is unparseable; the redraw takes the 21st item
    mock.script("", ["unparseable"] + [rating(2)] * 20, model="chair")
    script_peers(mock, [2])
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3), mock_gateway(mock))
    chair_calls = mock.calls_for("chair")
    assert [c.n for c in chair_calls] == [20, 1]
    assert v.ac.final_score == 2


def test_ac_parse_failure_propagates(mock):
    mock.script("", ["unparseable"], model="chair")
    script_peers(mock, [2])
    with pytest.raises(ParseFailure):
        evaluate_sample(rating_dataset(1).samples[0], "quality", rating_config(3, variant="lite"), mock_gateway(mock))
    run = run_dataset(rating_dataset(1), ["quality"], rating_config(3, variant="lite"), mock_gateway(mock))
    assert run.verdicts[0].error.stage == "area_chair"


def test_ac_backend_failure(mock):
    mock.script("", [MockFailure("down", retryable=False)], model="chair")
    script_peers(mock, [2])
    run = run_dataset(rating_dataset(1), ["quality"], rating_config(3), mock_gateway(mock))
    assert run.verdicts[0].error.kind == "ACFailure"


# isolation and ordering


def test_peers_never_see_each_other(mock):
    mock.script("", [rating(2)], model="chair")
    for i in range(3):
        mock.script("", [rating(2, f"SENTINEL-{i}")], model=f"peer{i}")
    run = run_dataset(rating_dataset(3), ["quality"], rating_config(3, strategy="both"), mock_gateway(mock))
    peer_prompts = [c.prompt for c in mock.calls if c.model != "chair"]
    assert peer_prompts and not any("SENTINEL" in p for p in peer_prompts)
    ac_prompts = [c.prompt for c in mock.calls_for("chair")]
    assert all(all(f"SENTINEL-{i}" in p for i in range(3)) for p in ac_prompts)
    assert not run.failures


def test_reviews_follow_configured_order(mock):
    mock.script("", [rating(2)], model="chair")
    for i, s in enumerate([3, 1, 2]):
        mock.script("", [rating(s)], model=f"peer{i}")
    cfg = rating_config(3, strategy=CommunicationStrategy.SCORE_ONLY)
    v = evaluate_sample(rating_dataset(1).samples[0], "quality", cfg, mock_gateway(mock))
    p = v.prompts["area_chair"]
    assert p.index("Rating: 3") < p.index("Rating: 1") < p.index("Rating: 2")


def test_concurrent_run_matches_sequential(mock):
    mock.script("", [rating(2), rating(3)], model="chair")
    script_peers(mock, [1, 2, 3])
    ds = rating_dataset(12, metrics=("quality", "style"))
    cfg = rating_config(3, metrics=("quality", "style"))
    seq = run_dataset(ds, ["quality", "style"], cfg, mock_gateway(mock))
    par = run_dataset(ds, ["quality", "style"], cfg, mock_gateway(mock), concurrency_limit=4)
    assert par.verdict_key() == [(s.id, m) for s in ds.samples for m in ("quality", "style")]
    strip = lambda run: [mask_volatile(v.to_dict()) for v in run.verdicts]
    assert strip(seq) == strip(par)


def test_run_record_timing_fields(mock):
    mock.script("", [rating(2)], model="chair")
    script_peers(mock, [2])
    run = run_dataset(rating_dataset(3), ["quality"], rating_config(3), mock_gateway(mock))
    assert set(run.timing) == {"wall_time", "mean_per_instance", "p50", "p90", "max"}
    assert run.runtime["requests"] == 12
    assert run.method == "peerchair-turbo"


# reasoning


def reasoning_setup(mock, peer_answers, ac_answers):
    schemas = {"answer": load_metric_schemas(bundled_schema_dir(), "csqa", "answer")}
    space = AnswerSpace.letters("A", "E")
    sample = Sample("q1", {"question": "Where do rivers end?", "options": "A) sea B) hill C) sky D) cup E) car"},
                    gold_answer="A")
    ds = Dataset("csqa", DatasetKind.REASONING, (sample,), ("answer",), answer_space=space)
    for i, a in enumerate(peer_answers):
        mock.script("", [f"Analysis: peer thinking.\nAnswer: {a}"], model=f"peer{i}")
    mock.script("", [f"Analysis: chair thinking.\nAnswer: {a}" for a in ac_answers], model="chair")
    cfg = RunConfig(peers=tuple(handles(len(peer_answers))), area_chair=area_chair(), schemas=schemas,
                    task_kind=TaskKind.REASONING, n=len(ac_answers))
    return ds, cfg


def test_reasoning_defaults_to_both(mock):
    _, cfg = reasoning_setup(mock, ["A", "B"], ["A"])
    assert cfg.strategy is CommunicationStrategy.BOTH


def test_reasoning_majority_and_tie(mock):
    ds, cfg = reasoning_setup(mock, ["A", "B", "A"], ["B", "A", "A", "C"])
    run = run_reasoning(ds, cfg, mock_gateway(mock))
    assert run.verdicts[0].ac.final_answer == "A"
    assert "Solution 1:" in run.verdicts[0].prompts["area_chair"]


def test_reasoning_tie_goes_to_first_seen():
    from peerchair.gateway import MockBackend

    mock = MockBackend()
    ds, cfg = reasoning_setup(mock, ["A", "B", "A"], ["C", "B", "B", "C"])
    run = run_reasoning(ds, cfg, mock_gateway(mock))
    assert run.verdicts[0].ac.final_answer == "C"


def test_reasoning_rejects_guidelines(mock):
    ds, cfg = reasoning_setup(mock, ["A", "B"], ["A"])
    sch = cfg.schemas["answer"]
    bad = RunConfig(peers=cfg.peers, area_chair=cfg.area_chair, task_kind="reasoning", n=1,
                    schemas={"answer": RoleSchemas(sch.peer.with_guidelines("- be careful"), sch.area_chair)})
    with pytest.raises(InvalidConfig):
        run_reasoning(ds, bad, mock_gateway(mock))


def test_kind_mismatch(mock):
    ds, _ = reasoning_setup(mock, ["A", "B"], ["A"])
    with pytest.raises(InvalidConfig):
        run_dataset(ds, ["answer"], rating_config(2, metrics=("answer",)), mock_gateway(mock))


# configuration


@pytest.mark.parametrize("kw", [
    {"peers": ()},
    {"peers": tuple(handles(1)) * 2},
    {"n": 0},
    {"variant": "lite", "n": 5},
    {"min_peers": 4},
    {"min_peers": 0},
])
def test_run_config_validation(kw):
    base = {"peers": tuple(handles(3)), "area_chair": area_chair(), "schemas": {}}
    base.update(kw)
    with pytest.raises(InvalidConfig):
        RunConfig(**base)


def test_defaults():
    cfg = rating_config(3)
    assert cfg.n_effective == 20 and cfg.min_peers_effective == 2
    assert cfg.strategy is CommunicationStrategy.SCORE_ONLY
    assert rating_config(1).min_peers_effective == 1
    assert rating_config(3, variant="lite").n_effective == 1
    peer, ac = default_hyperparameters("nlg_rating")
    assert (peer.max_tokens, ac.max_tokens) == (128, 256)
    assert default_hyperparameters("reasoning")[1].max_tokens is None
    assert Hyperparameters.from_dict({"temperature": 0.2}, peer) == Hyperparameters(0.2, 1.0, 128, None)


def test_missing_schema_for_metric(mock):
    with pytest.raises(InvalidConfig):
        run_dataset(rating_dataset(1, metrics=("other",)), ["other"], rating_config(3), mock_gateway(mock))


def test_config_dict_is_json(mock):
    json.dumps(rating_config(3).to_dict())


def test_dry_run_makes_no_calls(tmp_path, mock):
    written = dry_run(rating_dataset(2), ["quality"], rating_config(3), tmp_path)
    assert written == 4 and mock.call_count == 0
    skeleton = (tmp_path / "s000" / "quality.area_chair.txt").read_text(encoding="utf-8")
    assert "{{Peer_response3}}" in skeleton
    assert "context number 0" in (tmp_path / "s000" / "quality.peer.txt").read_text(encoding="utf-8")
