"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. The lines are
printed with output capture disabled so they show up in the normal log.
"""

import json
import math
import os
import random
import re
import time
from fractions import Fraction

import pytest
from conftest import (
    FIXTURES,
    area_chair,
    handles,
    mock_gateway,
    rating_dataset,
    rating_schema,
    write_workspace,
)
from test_metrics import spearman_oracle, tau_b_oracle
from test_parsing import CASES, case_agrees

from peerchair.cli import main
from peerchair.gateway import MockBackend
from peerchair.metrics import error_partition, kendall_tau_b, spearman
from peerchair.models import ScoreScale
from peerchair.orchestrator import RunConfig, run_dataset
from peerchair.prompts import RoleSchemas

GOLDEN = FIXTURES / "golden"


@pytest.fixture
def announce(capsys):
    def report(criterion: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {title}"
        if detail:
            line += f" ({detail})"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def sample_matcher(i):
    pattern = re.compile(rf"context number {i}\b")
    return lambda prompt: pattern.search(prompt) is not None


# 1. protocol conformance


@pytest.mark.parametrize("variant", ["lite", "turbo"])
def test_protocol_conformance(announce, variant):
    k, n_samples = 3, 20
    rng = random.Random(2024)
    mock = MockBackend()
    expected = {}
    for i in range(n_samples):
        draws = [rng.randint(1, 3) for _ in range(20)]
        used = draws if variant == "turbo" else draws[:1]
        expected[f"s{i:03d}"] = Fraction(sum(used), len(used))
        mock.script(sample_matcher(i), [f"Analysis: chair on {i}.\nRating: {d}" for d in draws], model="chair")
    for p in range(k):
        mock.script("", [f"Analysis: peer {p}.\nRating: {1 + p}"], model=f"peer{p}")
    cfg = RunConfig(peers=tuple(handles(k)), area_chair=area_chair(),
                    schemas={"quality": RoleSchemas(rating_schema(), rating_schema())}, variant=variant)

    started = time.perf_counter()
    run = run_dataset(rating_dataset(n_samples), ["quality"], cfg, mock_gateway(mock))
    elapsed = time.perf_counter() - started

    chair_n = [c.n for c in mock.calls_for("chair")]
    finals = {v.sample_id: v.ac.final_score for v in run.verdicts}
    ok = (
        mock.call_count == n_samples * (k + 1)
        and chair_n == [20 if variant == "turbo" else 1] * n_samples
        and finals == expected
        and elapsed < 5.0
    )
    announce(1, f"protocol conformance [{variant}]", ok,
             f"{mock.call_count} calls, AC n={chair_n[0]}, exact means {finals == expected}, {elapsed:.2f}s")


# 2. oracle equivalence


def test_oracle_equivalence(announce):
    rng = random.Random(1)
    started = time.perf_counter()
    worst = 0.0
    checked = 0
    while checked < 1000:
        n = rng.randint(2, 8)
        x = [rng.randint(1, 4) for _ in range(n)]
        y = [rng.randint(1, 4) for _ in range(n)]
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        worst = max(worst, abs(spearman(x, y).value - spearman_oracle(x, y)),
                    abs(kendall_tau_b(x, y).value - tau_b_oracle(x, y)))
        checked += 1
    tied = abs(kendall_tau_b([1, 2, 2, 3], [1, 2, 3, 4]).value - 5 / math.sqrt(30))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-12 and tied <= 1e-12 and elapsed < 10.0
    announce(2, "oracle equivalence", ok, f"{checked} pairs, max error {worst:.1e}, tied example {tied:.1e}, {elapsed:.2f}s")


# 3. parser robustness corpus


def test_parser_corpus(announce):
    types = {c["type"] for c in CASES}
    needed = {"well_formed", "metric_named", "out_of_range", "missing_rating", "parenthesized", "comma_numerals"}
    failed = [c["id"] for c in CASES if not case_agrees(c)]
    ok = len(CASES) >= 30 and needed <= types and not failed
    announce(3, "parser robustness corpus", ok, f"{len(CASES) - len(failed)}/{len(CASES)} agree, failed: {failed}")


# 4. determinism


def test_determinism(announce, tmp_path, monkeypatch):
    paths = write_workspace(tmp_path / "ws", n=5, metrics=("quality", "style"))
    calls = []
    original = MockBackend.complete

    def counting(self, handle, request):
        calls.append(handle.name)
        return original(self, handle, request)

    monkeypatch.setattr(MockBackend, "complete", counting)

    def evaluate(out):
        return main(["evaluate", "--config", str(paths["config"]), "--dataset", str(paths["dataset"]),
                     "--out", str(out), "--cache-dir", str(tmp_path / "cache"), "--mask-timing"])

    assert evaluate(tmp_path / "warm") == 0
    warm_calls = len(calls)
    calls.clear()
    codes = [evaluate(tmp_path / "a"), evaluate(tmp_path / "b")]
    files = ("verdicts.jsonl", "summary.json")
    identical = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = codes == [0, 0] and warm_calls > 0 and not calls and identical
    announce(4, "determinism", ok, f"warm-up {warm_calls} calls, repeat runs {len(calls)} calls, byte-identical {identical}")


# 5. strategy isolation


def isolation_run(strategy, peer_text, peer_score):
    scale = (0, 1000)
    mock = MockBackend()
    mock.script("", ["Analysis: chair.\nRating: 500"], model="chair")
    for p in range(3):
        for i in range(10):
            mock.script(sample_matcher(i), [f"Analysis: {peer_text(p, i)}\nRating: {peer_score(p, i)}"], model=f"peer{p}")
    schema = rating_schema(scale=scale)
    cfg = RunConfig(peers=tuple(handles(3)), area_chair=area_chair(), schemas={"quality": RoleSchemas(schema, schema)},
                    variant="lite", strategy=strategy)
    run = run_dataset(rating_dataset(10, scale=scale), ["quality"], cfg, mock_gateway(mock))
    return run, [c.prompt for c in mock.calls_for("chair")]


def test_strategy_isolation(announce):
    sentinels = {(p, i): f"ZQX-SENTINEL-{p}-{i}" for p in range(3) for i in range(10)}
    run, prompts = isolation_run("score_only", lambda p, i: sentinels[p, i], lambda p, i: 100 + p)
    leaked_text = [s for s in sentinels.values() for pr in prompts if s in pr]
    text_ok = len(prompts) == 10 and not run.failures and not leaked_text

    numerals = {(p, i): 700 + 10 * i + p for p in range(3) for i in range(10)}
    run2, prompts2 = isolation_run("comment_only", lambda p, i: f"peer {p} looked closely.",
                                   lambda p, i: numerals[p, i])
    leaked_num = [n for n in numerals.values() for pr in prompts2 if re.search(rf"(?<!\d){n}(?!\d)", pr)]
    # the analyses themselves must reach the area chair under comment_only
    comments_present = all("peer 0 looked closely." in pr for pr in prompts2)
    num_ok = len(prompts2) == 10 and not run2.failures and not leaked_num and comments_present
    announce(5, "strategy isolation", text_ok and num_ok,
             f"score_only leaks {len(leaked_text)}, comment_only leaks {len(leaked_num)} over 10 samples each")


# 6. error partition soundness

# (count, truth, peer scores, area-chair score); distances put each group in a
# known cell at each threshold on a 1-5 scale (span 4)
GROUPS = [
    (20, 3, (3, 1, 5), 3),
    (15, 3, (3, 1, 5), Fraction(9, 2)),
    (15, 3, (1, 5, 1), Fraction(13, 4)),
    (20, 3, (Fraction(15, 4), 1, 5), Fraction(15, 4)),
    (10, 3, (1, 5, 5), 5),
    (10, 1, (5, 5, 5), 5),
    (10, 3, (Fraction(33, 10), 5, 1), 4),
]

# hand-derived cells (A some peer right/AC right, B some peer right/AC wrong,
# C all peers wrong/AC right, D all wrong)
HAND_ORACLE = {
    0.1: (20, 25, 15, 40),
    0.25: (50, 15, 15, 20),
    0.5: (90, 0, 0, 10),
}


def test_error_partition(announce):
    rows = [(peers, ac, truth) for count, truth, peers, ac in GROUPS for _ in range(count)]
    random.Random(5).shuffle(rows)
    peers, acs, truths = zip(*rows)
    scale = ScoreScale(1, 5, "continuous")
    got = {}
    for frac in HAND_ORACLE:
        c = error_partition(peers, acs, truths, scale, frac)
        got[frac] = (c.some_peer_correct_ac_correct, c.some_peer_correct_ac_wrong,
                     c.all_peers_wrong_ac_correct, c.all_peers_wrong_ac_wrong)
    sums = {f: sum(v) for f, v in got.items()}
    ac_right = [got[f][0] + got[f][2] for f in sorted(got)]
    peer_right = [got[f][0] + got[f][1] for f in sorted(got)]
    monotone = ac_right == sorted(ac_right) and peer_right == sorted(peer_right)
    ok = len(rows) == 100 and got == HAND_ORACLE and set(sums.values()) == {100} and monotone
    announce(6, "error partition soundness", ok, f"cells {got}, monotone {monotone}")


# 7. golden fixture


def test_golden_fixture(announce, tmp_path):
    out = tmp_path / "golden"
    run_code = main(["evaluate", "--config", str(GOLDEN / "config.yaml"), "--dataset", str(GOLDEN / "dataset.jsonl"),
                     "--out", str(out / "run"), "--mask-timing"])
    corr_code = main(["correlate", "--run", str(out / "run"), "--dataset", str(GOLDEN / "dataset.jsonl"),
                      "--out", str(out / "correlation")])
    expected = sorted(p.relative_to(GOLDEN / "expected") for p in (GOLDEN / "expected").rglob("*") if p.is_file())
    mismatched = [str(rel) for rel in expected
                  if not (out / rel).is_file() or (out / rel).read_bytes() != (GOLDEN / "expected" / rel).read_bytes()]

    # the golden correlations themselves agree with the brute-force oracles
    human = {}
    for line in (GOLDEN / "dataset.jsonl").read_text().splitlines()[1:]:
        rec = json.loads(line)
        human[rec["id"]] = {m: Fraction(str(v)) for m, v in rec["human_scores"].items()}
    finals = {}
    for line in (GOLDEN / "expected" / "run" / "verdicts.jsonl").read_text().splitlines()[1:]:
        rec = json.loads(line)
        finals.setdefault(rec["metric"], []).append((Fraction(str(rec["ac"]["final_score"])), human[rec["sample_id"]][rec["metric"]]))
    report = json.loads((GOLDEN / "expected" / "correlation" / "correlation.json").read_text())
    oracle_ok = True
    for metric, pairs in finals.items():
        x, y = [float(a) for a, _ in pairs], [float(b) for _, b in pairs]
        got = report["metrics"][metric]
        oracle_ok &= abs(got["spearman"] - spearman_oracle(x, y)) <= 1e-12
        oracle_ok &= abs(got["kendall_tau_b"] - tau_b_oracle(x, y)) <= 1e-12

    ok = run_code == 0 and corr_code == 0 and len(expected) == 4 and not mismatched and oracle_ok
    announce(7, "golden mini-TopicalChat fixture", ok,
             f"{len(expected) - len(mismatched)}/{len(expected)} files byte-identical, oracle check {oracle_ok}")


# 8. live smoke (optional)


@pytest.mark.live
def test_live_smoke(announce, tmp_path, capsys):
    config = os.environ.get("PEERCHAIR_LIVE_CONFIG")
    dataset = os.environ.get("PEERCHAIR_LIVE_DATASET")
    if not (config and dataset):
        with capsys.disabled():
            print("\nSKIP criterion 8: live smoke (set PEERCHAIR_LIVE_CONFIG and PEERCHAIR_LIVE_DATASET)")
        pytest.skip("live smoke needs PEERCHAIR_LIVE_CONFIG and PEERCHAIR_LIVE_DATASET")

    from peerchair.datasets import dump_dataset, load_dataset, load_run
    from peerchair.models import Dataset

    full = load_dataset(dataset)
    small = Dataset(full.name, full.kind, full.samples[:10], full.metrics, full.scale, full.answer_space)
    dump_dataset(small, tmp_path / "ten.jsonl")
    code = main(["evaluate", "--config", config, "--dataset", str(tmp_path / "ten.jsonl"),
                 "--out", str(tmp_path / "run"), "--variant", "lite"])
    corr = main(["correlate", "--run", str(tmp_path / "run"), "--dataset", str(tmp_path / "ten.jsonl"),
                 "--out", str(tmp_path / "corr")])
    report = json.loads((tmp_path / "corr" / "correlation.json").read_text())
    finite = all(isinstance(m.get("spearman"), float) and math.isfinite(m["spearman"])
                 for m in report["metrics"].values())
    run = load_run(tmp_path / "run")
    calls = sum(e.calls for e in run.ledger.entries.values())
    ok_verdicts = sum(1 for v in run.verdicts if v.ok)
    per_method = {}
    for (method, _), e in run.ledger.entries.items():
        per_method[method] = per_method.get(method, 0) + e.calls
    ledger_ok = per_method.get("area_chair", 0) >= ok_verdicts and calls >= ok_verdicts
    ok = code == 0 and corr == 0 and report["format"] == "peerchair.correlation" and finite and ledger_ok
    announce(8, "live smoke", ok, f"{ok_verdicts} verdicts, {calls} ledger calls, finite rho {finite}")
