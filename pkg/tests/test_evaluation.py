import json
import random

import pytest

from ragforge.benchmark import ResponseRecord, RunLedger, RunManifest
from ragforge.errors import (
    ConfigError,
    DuplicateJudgment,
    InsufficientOverlap,
    MissingResponses,
    NoJudgments,
    SessionClosed,
    SessionStillOpen,
    UnknownConfig,
    UnknownQid,
    UnknownRun,
)
from ragforge.evaluation import (
    EvalSession,
    EvaluationStore,
    PairwiseJudgment,
    SingleJudgment,
    agreement,
    assign_side,
    build_report,
    percent,
    preference_rate,
    render_csv,
    render_text,
    resolve_pairwise,
    single_rate,
)


def seed_run(runs_dir, run_id="run1", configs=("rag", "baseline"), qids=("q1", "q2", "q3")):
    """Write a run ledger full of successful records for every (config, qid)."""
    ledger = RunLedger(runs_dir / run_id)
    ledger.write_manifest(
        RunManifest(
            run_id=run_id,
            config_names=list(configs),
            benchmark_path="bench.tsv",
            benchmark_hash=1,
            index_metadata={"chunk_size": 512, "overlap": 64},
            started_at="2026-01-01T00:00:00+00:00",
            config_params={c: {"mode": c} for c in configs},
        )
    )
    for config in configs:
        for qid in qids:
            ledger.append_record(
                ResponseRecord(
                    config_name=config,
                    qid=qid,
                    status="success",
                    question_text=f"question {qid}",
                    answer_text=f"answer from {config} for {qid}",
                )
            )
    return ledger


@pytest.fixture
def store(tmp_path):
    seed_run(tmp_path / "runs")
    return EvaluationStore(tmp_path / "judgments.jsonl", tmp_path / "runs")


def make_judgment(session_id, qid, winner_side="left"):
    other = "right" if winner_side == "left" else "left"
    return PairwiseJudgment(
        session_id=session_id,
        qid=qid,
        better=winner_side,
        more_accurate=winner_side,
        more_factual=other,
        more_relevant=winner_side,
    )


class TestCreateSession:
    def test_deterministic_assignments(self, store):
        s1 = store.create_session("run1", "expert-1", ("rag", "baseline"), ["q1", "q2"], seed=99)
        s2 = store.create_session("run1", "expert-2", ("rag", "baseline"), ["q1", "q2"], seed=99)
        for qid in ("q1", "q2"):
            assert s1.assignment(qid) == s2.assignment(qid).__class__(
                qid, s2.assignment(qid).left_config, s2.assignment(qid).right_config
            )

    def test_assignment_pure_function_of_seed_and_qid(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2", "q3"], seed=5)
        for qid in session.qids:
            expected_left = "rag" if assign_side(5, qid) else "baseline"
            assert session.assignment(qid).left_config == expected_left

    def test_missing_responses_listed(self, store):
        with pytest.raises(MissingResponses) as err:
            store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q9"], seed=1)
        assert err.value.qids == ["q9"]

    def test_unknown_run(self, store):
        with pytest.raises(UnknownRun):
            store.create_session("ghost", "e", ("rag", "baseline"), ["q1"], seed=1)

    def test_same_config_pairing_rejected(self, store):
        with pytest.raises(ConfigError):
            store.create_session("run1", "e", ("rag", "rag"), ["q1"], seed=1)

    def test_default_qids_are_all_available(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), None, seed=1)
        assert session.qids == ["q1", "q2", "q3"]

    def test_balance_over_1000_qids(self, tmp_path):
        qids = [f"q{i:04d}" for i in range(1000)]
        seed_run(tmp_path / "runs", qids=qids)
        store = EvaluationStore(tmp_path / "judgments.jsonl", tmp_path / "runs")
        session = store.create_session("run1", "e", ("rag", "baseline"), qids, seed=2024)
        left_a = sum(1 for qid in qids if session.assignment(qid).left_config == "rag")
        assert 450 <= left_a <= 550

    def test_error_record_blocks_session(self, tmp_path):
        ledger = seed_run(tmp_path / "runs", qids=("q1", "q2"))
        ledger.append_record(
            ResponseRecord(config_name="rag", qid="q2", status="error", question_text="question q2")
        )
        store = EvaluationStore(tmp_path / "judgments.jsonl", tmp_path / "runs")
        with pytest.raises(MissingResponses):
            store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)


class TestRecordPairwise:
    def test_store_and_progress(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        assert store.progress(session.session_id) == (1, 2)

    def test_duplicate(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        with pytest.raises(DuplicateJudgment):
            store.record_pairwise(make_judgment(session.session_id, "q1"))

    def test_unknown_qid(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        with pytest.raises(UnknownQid):
            store.record_pairwise(make_judgment(session.session_id, "q9"))

    def test_session_closes_after_last_item(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        store.record_pairwise(make_judgment(session.session_id, "q2"))
        assert store.session(session.session_id).status == "complete"
        with pytest.raises(SessionClosed):
            store.record_pairwise(make_judgment(session.session_id, "q1"))

    def test_invalid_side_rejected(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        with pytest.raises(ConfigError):
            PairwiseJudgment(session.session_id, "q1", "centre", "left", "left", "left")

    def test_next_unjudged_order(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2", "q3"], seed=1)
        assert store.next_unjudged(session.session_id) == "q1"
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        assert store.next_unjudged(session.session_id) == "q2"


class TestRecordSingle:
    def single(self, session_id, qid, config, **overrides):
        fields = dict(
            session_id=session_id,
            qid=qid,
            config=config,
            non_harmful=True,
            contextually_correct=True,
            understandable=True,
            real_world_applicable=True,
        )
        fields.update(overrides)
        return SingleJudgment(**fields)

    def test_stored(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        store.record_single(self.single(session.session_id, "q1", "rag"))
        assert (session.session_id, "q1", "rag") in store.singles

    def test_duplicate_key(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        store.record_single(self.single(session.session_id, "q1", "rag"))
        with pytest.raises(DuplicateJudgment):
            store.record_single(self.single(session.session_id, "q1", "rag", non_harmful=False))

    def test_unknown_config(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        with pytest.raises(UnknownConfig):
            store.record_single(self.single(session.session_id, "q1", "mystery"))

    def test_singles_then_final_pairwise(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        store.record_single(self.single(session.session_id, "q1", "rag"))
        store.record_single(self.single(session.session_id, "q1", "baseline"))
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        assert store.session(session.session_id).status == "complete"


class TestUnblind:
    def test_open_session_refuses(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        with pytest.raises(SessionStillOpen):
            store.unblind(session.session_id)

    def test_complete_session_reveals_and_matches_recomputation(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=7)
        for qid in ("q1", "q2"):
            store.record_pairwise(make_judgment(session.session_id, qid))
        mapping = store.unblind(session.session_id)
        for qid in ("q1", "q2"):
            left = "rag" if assign_side(7, qid) else "baseline"
            right = "baseline" if left == "rag" else "rag"
            assert mapping[qid] == (left, right)


class TestBlindingSoundness:
    def test_public_view_carries_no_config_names(self, store):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        payload = json.dumps(session.public_view())
        assert "rag" not in payload
        assert "baseline" not in payload


class TestRates:
    def resolved(self, winners_by_criterion_list, pairing=("rag", "baseline")):
        from ragforge.evaluation import ResolvedPairwise

        out = []
        for i, winners in enumerate(winners_by_criterion_list):
            out.append(
                ResolvedPairwise(
                    session_id="s",
                    evaluator_id="e",
                    qid=f"q{i}",
                    pairing=pairing,
                    winners=winners,
                )
            )
        return out

    def test_two_of_three(self):
        resolved = self.resolved(
            [
                {"better": "rag", "more_accurate": "rag", "more_factual": "rag", "more_relevant": "rag"},
                {"better": "rag", "more_accurate": "rag", "more_factual": "rag", "more_relevant": "rag"},
                {"better": "baseline", "more_accurate": "baseline", "more_factual": "baseline", "more_relevant": "baseline"},
            ]
        )
        assert preference_rate(resolved, "better", ("rag", "baseline")) == (66.7, 33.3)

    def test_170_of_200(self):
        winners = [{"better": "rag"} | {c: "rag" for c in ("more_accurate", "more_factual", "more_relevant")}] * 170
        winners += [{"better": "baseline"} | {c: "baseline" for c in ("more_accurate", "more_factual", "more_relevant")}] * 30
        resolved = self.resolved(winners)
        assert preference_rate(resolved, "better", ("rag", "baseline")) == (85.0, 15.0)

    def test_unanimity(self):
        winners = [{c: "rag" for c in ("better", "more_accurate", "more_factual", "more_relevant")}] * 5
        resolved = self.resolved(winners)
        assert preference_rate(resolved, "better", ("rag", "baseline")) == (100.0, 0.0)

    def test_no_judgments(self):
        with pytest.raises(NoJudgments):
            preference_rate([], "better", ("rag", "baseline"))

    def test_single_rate_181_of_250(self):
        from ragforge.evaluation import ResolvedSingle

        resolved = [
            ResolvedSingle(
                session_id="s",
                evaluator_id="e",
                qid=f"q{i}",
                config="rag",
                answers={
                    "non_harmful": True,
                    "contextually_correct": i < 181,
                    "understandable": True,
                    "real_world_applicable": False,
                },
            )
            for i in range(250)
        ]
        assert single_rate(resolved, "rag", "contextually_correct") == 72.4
        assert single_rate(resolved, "rag", "non_harmful") == 100.0
        assert single_rate(resolved, "rag", "real_world_applicable") == 0.0

    def test_percent_half_up(self):
        assert percent(1, 1600) == 0.1  # 0.0625 -> 0.1
        assert percent(141, 200) == 70.5
        assert percent(1, 3) == 33.3
        assert percent(2, 3) == 66.7


class TestAgreement:
    def resolved_pair(self, qid, evaluator, winner):
        from ragforge.evaluation import ResolvedPairwise

        return ResolvedPairwise(
            session_id=f"s-{evaluator}",
            evaluator_id=evaluator,
            qid=qid,
            pairing=("rag", "baseline"),
            winners={"better": winner, "more_accurate": winner, "more_factual": winner, "more_relevant": winner},
        )

    def test_perfect_agreement(self):
        resolved = [
            self.resolved_pair("q1", "e1", "rag"),
            self.resolved_pair("q1", "e2", "rag"),
            self.resolved_pair("q2", "e1", "baseline"),
            self.resolved_pair("q2", "e2", "baseline"),
        ]
        assert agreement(resolved) == pytest.approx(1.0, abs=1e-12)

    def test_all_same_category_is_1(self):
        resolved = [
            self.resolved_pair("q1", "e1", "rag"),
            self.resolved_pair("q1", "e2", "rag"),
        ]
        assert agreement(resolved) == 1.0

    def test_hand_computed_2x2_disagreement(self):
        # items q1: (rag, baseline), q2: (baseline, rag)
        # P_i = 0 for both items; p_rag = p_baseline = 0.5 so P_e = 0.5
        # kappa = (0 - 0.5) / (1 - 0.5) = -1.0
        resolved = [
            self.resolved_pair("q1", "e1", "rag"),
            self.resolved_pair("q1", "e2", "baseline"),
            self.resolved_pair("q2", "e1", "baseline"),
            self.resolved_pair("q2", "e2", "rag"),
        ]
        assert agreement(resolved) == pytest.approx(-1.0, abs=1e-9)

    def test_single_evaluator_insufficient(self):
        resolved = [self.resolved_pair("q1", "e1", "rag")]
        with pytest.raises(InsufficientOverlap):
            agreement(resolved)


class TestReport:
    def build_synthetic(self, tmp_path, counts=(170, 151, 182), total=200, shuffle_seed=None):
        """One evaluator, 200 qids; winners arranged so better/accuracy/relevance
        favor 'rag' exactly counts[0..2] times (factuality mirrors accuracy)."""
        qids = [f"q{i:04d}" for i in range(total)]
        seed_run(tmp_path / "runs", qids=qids)
        store = EvaluationStore(tmp_path / "judgments.jsonl", tmp_path / "runs")
        session = store.create_session("run1", "expert-1", ("rag", "baseline"), qids, seed=11)

        judgments = []
        for i, qid in enumerate(qids):
            assignment = session.assignment(qid)
            side_of = {assignment.left_config: "left", assignment.right_config: "right"}
            judgments.append(
                PairwiseJudgment(
                    session_id=session.session_id,
                    qid=qid,
                    better=side_of["rag"] if i < counts[0] else side_of["baseline"],
                    more_accurate=side_of["rag"] if i < counts[1] else side_of["baseline"],
                    more_factual=side_of["rag"] if i < counts[1] else side_of["baseline"],
                    more_relevant=side_of["rag"] if i < counts[2] else side_of["baseline"],
                )
            )
        if shuffle_seed is not None:
            random.Random(shuffle_seed).shuffle(judgments)
        for judgment in judgments:
            store.record_pairwise(judgment)
        manifest = RunLedger(tmp_path / "runs" / "run1").read_manifest()
        return store, manifest

    def test_headline_rows(self, tmp_path):
        store, manifest = self.build_synthetic(tmp_path)
        report = build_report(manifest, store.sessions, list(store.pairwise.values()), [])
        rows = {row.criterion: row for row in report.pairings[("baseline", "rag")]}
        # rows are keyed on the sorted pairing; 'rag' is config_b
        assert (rows["better"].pct_b, rows["better"].pct_a) == (85.0, 15.0)
        assert (rows["more_accurate"].pct_b, rows["more_accurate"].pct_a) == (75.5, 24.5)
        assert (rows["more_relevant"].pct_b, rows["more_relevant"].pct_a) == (91.0, 9.0)

    def test_complementarity(self, tmp_path):
        store, manifest = self.build_synthetic(tmp_path)
        report = build_report(manifest, store.sessions, list(store.pairwise.values()), [])
        for rows in report.pairings.values():
            for row in rows:
                assert 99.9 <= row.pct_a + row.pct_b <= 100.1

    def test_shuffle_invariance_byte_identical(self, tmp_path):
        store1, manifest1 = self.build_synthetic(tmp_path / "a")
        store2, manifest2 = self.build_synthetic(tmp_path / "b", shuffle_seed=99)
        r1 = build_report(manifest1, store1.sessions, list(store1.pairwise.values()), [])
        r2 = build_report(manifest2, store2.sessions, list(store2.pairwise.values()), [])
        # session ids differ; compare rendered tables, which exclude them
        assert render_text(r1) == render_text(r2)
        assert render_csv(r1) == render_csv(r2)

    def test_rerun_byte_identical(self, tmp_path):
        store, manifest = self.build_synthetic(tmp_path)
        args = (manifest, store.sessions, list(store.pairwise.values()), [])
        assert render_text(build_report(*args)) == render_text(build_report(*args))

    def test_empty_ledger(self, tmp_path):
        seed_run(tmp_path / "runs")
        manifest = RunLedger(tmp_path / "runs" / "run1").read_manifest()
        with pytest.raises(NoJudgments):
            build_report(manifest, {}, [], [])

    def test_open_sessions_excluded(self, store, tmp_path):
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))  # still open
        manifest = RunLedger(tmp_path / "runs" / "run1").read_manifest()
        with pytest.raises(NoJudgments):
            build_report(manifest, store.sessions, list(store.pairwise.values()), [])

    def test_config_params_echoed(self, tmp_path):
        store, manifest = self.build_synthetic(tmp_path)
        report = build_report(manifest, store.sessions, list(store.pairwise.values()), [])
        text = render_text(report)
        assert "chunk_size=512" in text
        assert "overlap=64" in text


class TestLedgerReplay:
    def test_duplicate_on_disk_detected(self, tmp_path):
        seed_run(tmp_path / "runs")
        path = tmp_path / "judgments.jsonl"
        store = EvaluationStore(path, tmp_path / "runs")
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        line = path.read_text(encoding="utf-8").splitlines()[-1]
        with path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        with pytest.raises(DuplicateJudgment):
            EvaluationStore(path, tmp_path / "runs")

    def test_reload_restores_state(self, tmp_path):
        seed_run(tmp_path / "runs")
        path = tmp_path / "judgments.jsonl"
        store = EvaluationStore(path, tmp_path / "runs")
        session = store.create_session("run1", "e", ("rag", "baseline"), ["q1", "q2"], seed=1)
        store.record_pairwise(make_judgment(session.session_id, "q1"))
        reloaded = EvaluationStore(path, tmp_path / "runs")
        assert reloaded.progress(session.session_id) == (1, 2)
        assert reloaded.session(session.session_id).status == "open"
