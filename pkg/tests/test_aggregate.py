import numpy as np
import pytest

from sluiceflow.aggregate import (
    EntityScore,
    entity_scores_from_flow_scores,
    flag,
    score_entities,
    score_flows,
    write_verdicts,
)
from sluiceflow.flowstore import EntityKind, FlowRecord, InstanceKey
from sluiceflow.sluicemodel import DomainCnnConfig, ModelMode, build_model
from sluiceflow.synthgen import SynthConfig, generate


def make_flow(client="c", domain="d", ts=0.0):
    return FlowRecord(
        client_id=client, domain=domain, ts_start=ts,
        duration=1.0, bytes_sent=10, bytes_received=10,
    )


class TestMaxPool:
    def test_max_and_argmax(self):
        flows = [make_flow(ts=float(t)) for t in range(3)]
        scores = np.array([0.1, 0.9, 0.3])
        (entity,) = entity_scores_from_flow_scores(flows, scores, EntityKind.CLIENT)
        assert entity.score == 0.9
        assert entity.argmax_flow == 1
        assert entity.n_flows == 3

    def test_single_flow_instance(self):
        (entity,) = entity_scores_from_flow_scores(
            [make_flow()], np.array([0.42]), EntityKind.DOMAIN
        )
        assert entity.score == 0.42

    def test_tie_takes_first_flow(self):
        flows = [make_flow(ts=0.0), make_flow(ts=1.0)]
        (entity,) = entity_scores_from_flow_scores(
            flows, np.array([0.7, 0.7]), EntityKind.CLIENT
        )
        assert entity.argmax_flow == 0

    def test_adding_flow_never_decreases_score(self):
        rng = np.random.default_rng(0)
        flows = [make_flow(ts=float(t)) for t in range(10)]
        scores = rng.uniform(size=10)
        for n in range(2, 10):
            (a,) = entity_scores_from_flow_scores(
                flows[: n - 1], scores[: n - 1], EntityKind.CLIENT
            )
            (b,) = entity_scores_from_flow_scores(flows[:n], scores[:n], EntityKind.CLIENT)
            assert b.score >= a.score

    def test_equality_with_brute_force_on_synthetic_flows(self):
        cfg = SynthConfig(
            n_clients=10, n_days=2, n_benign_domains=25, n_malicious_domains=5,
            benign_flows_per_day=25.0, infection_rate=0.3, seed=11,
        )
        flows, _ = generate(cfg)
        flows = flows[:1000]
        model = build_model(
            ModelMode.INDEPENDENT_CLIENT,
            cnn=DomainCnnConfig(4, 4, 6, 6), dense_units=8, k=1, seed=0,
        )
        entities = score_entities(model, flows, EntityKind.CLIENT)
        flow_scores = score_flows(model, flows, "client")
        # brute force: group flows per (client, day) and take the max
        expected = {}
        for i, f in enumerate(flows):
            key = (f.client_id, f.day)
            expected[key] = max(expected.get(key, -1.0), flow_scores[i])
        assert len(entities) == len(expected)
        for e in entities:
            assert e.score == pytest.approx(expected[(e.key.entity, e.key.day)], abs=0)

    def test_wrong_task_mode_rejected(self):
        model = build_model(
            ModelMode.INDEPENDENT_CLIENT,
            cnn=DomainCnnConfig(4, 4, 6, 6), dense_units=8, k=1, seed=0,
        )
        with pytest.raises(ValueError, match="domain"):
            score_entities(model, [make_flow()], EntityKind.DOMAIN)


class TestFlag:
    def entity(self, name, score):
        return EntityScore(
            key=InstanceKey(EntityKind.CLIENT, name, 0),
            score=score, n_flows=1, argmax_flow=0,
        )

    def test_threshold_one_empty(self):
        assert flag([self.entity("a", 1.0)], 1.0) == []

    def test_threshold_zero_keeps_positive_scores(self):
        scores = [self.entity("a", 0.5), self.entity("b", 0.0)]
        assert [e.key.entity for e in flag(scores, 0.0)] == ["a"]

    def test_strict_inequality_and_sorting(self):
        scores = [self.entity("b", 0.5), self.entity("a", 0.9), self.entity("c", 0.7)]
        flagged = flag(scores, 0.7)
        assert [e.key.entity for e in flagged] == ["a"]

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(1)
        scores = [self.entity(f"e{i}", float(rng.uniform())) for i in range(50)]
        prev = {e.key for e in flag(scores, 0.1)}
        for thr in (0.3, 0.5, 0.8, 0.95):
            cur = {e.key for e in flag(scores, thr)}
            assert cur <= prev
            prev = cur

    def test_bad_threshold_rejected(self):
        with pytest.raises(ValueError):
            flag([], 1.5)


def test_verdict_csv(tmp_path):
    flows = [make_flow(ts=0.0), make_flow(ts=1.0, domain="evil.com")]
    entities = entity_scores_from_flow_scores(
        flows, np.array([0.2, 0.8]), EntityKind.CLIENT
    )
    path = tmp_path / "verdicts.csv"
    write_verdicts(path, entities, flows)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("kind,entity,day,score,n_flows")
    assert "evil.com" in lines[1]
