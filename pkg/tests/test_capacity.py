import json
import warnings
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest

from repcap import capacity as cap
from repcap.capacity import MetricBundle, NormalizedBundle, PipelineConfig
from repcap.dataset import Alphabet, synthesize_dataset
from repcap.embeddings import EmbeddingMatrix, embed_dataset
from repcap.tpe import TpeConfig, WeightVector
from repcap.tsne import TsneConfig

FAST = PipelineConfig(
    methods=("spike2vec", "pwm2vec"),
    logreg_epochs=200,
    kmeans_restarts=3,
    tsne=TsneConfig(iterations=120, momentum_switch=30, exaggeration_iters=30),
    sweep_k_max=20,
    tpe=TpeConfig(n_trials=120, n_startup=20),
)


@pytest.fixture(scope="module")
def data():
    return synthesize_dataset(3, 15, 40, Alphabet.dna(), 0.1, seed=11)


@pytest.fixture(scope="module")
def report(data):
    return cap.evaluate_all(data, FAST)


def test_rc_examples():
    ones = np.ones(4)
    uniform = WeightVector.uniform()
    assert cap.rc_score(uniform, ones, cap.AS_WRITTEN) == 0.0
    assert cap.rc_score(uniform, ones, cap.ADDITIVE) == 1.0
    vals = NormalizedBundle(0.4, 0.9, 0.2, 0.7)
    for mode in cap.MODES:
        assert cap.rc_score(WeightVector(1, 0, 0, 0), vals, mode) == 0.4
    with pytest.raises(cap.CapacityError):
        cap.rc_score(uniform, ones, "mean")


def test_table_row_both_modes():
    w = WeightVector.from_raw([0.3329, 0.3326, 0.0074, 0.3270])
    v = np.array([0.8533, 0.5447, 0.8623, 0.9325])
    literal = cap.rc_score(w, v, cap.AS_WRITTEN)
    additive = cap.rc_score(w, v, cap.ADDITIVE)
    assert literal == pytest.approx(0.1539, abs=5e-4)
    assert additive == pytest.approx(0.7765, abs=5e-4)
    assert abs(literal - 0.7638) > 0.01 and abs(additive - 0.7638) > 0.01


def test_normalize_self_max_and_shift():
    bundles = {
        "a": MetricBundle(0.9, -0.2, 0.5, 0.8),
        "b": MetricBundle(0.6, -0.4, 0.5, 0.9),
    }
    norm, shifts = cap.normalize(bundles)
    assert norm["a"].acc_class == 1.0 and norm["b"].acc_class == pytest.approx(2 / 3)
    assert norm["a"].agree_neighbor == norm["b"].agree_neighbor == 1.0
    assert shifts == {"score_clust": pytest.approx(1.4)}
    assert norm["a"].score_clust == 1.0
    assert norm["b"].score_clust == pytest.approx(1.0 / 1.2)


def test_normalize_single_method_is_all_ones():
    norm, _ = cap.normalize({"x": MetricBundle(0.3, 0.1, 0.2, 0.9)})
    assert norm["x"].as_array().tolist() == [1.0, 1.0, 1.0, 1.0]


def test_normalize_scale_consistent():
    rng = np.random.default_rng(0)
    bundles = {m: MetricBundle(*rng.uniform(0.1, 1, 4)) for m in "abcd"}
    scaled = {m: replace(b, trust_neighbor=b.trust_neighbor * 3.7) for m, b in bundles.items()}
    a, _ = cap.normalize(bundles)
    b, _ = cap.normalize(scaled)
    for m in bundles:
        assert np.allclose(a[m].as_array(), b[m].as_array(), rtol=1e-12)
    per_metric_max = np.max([a[m].as_array() for m in bundles], axis=0)
    assert np.all(per_metric_max == 1.0)


def test_dominance_with_optimized_weights():
    bundles = {"a": MetricBundle(0.9, 0.5, 0.8, 0.9), "b": MetricBundle(0.7, 0.3, 0.6, 0.85)}
    norm, _ = cap.normalize(bundles)
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = WeightVector.from_raw(rng.random(4))
        assert cap.rc_score(w, norm["a"], cap.ADDITIVE) >= cap.rc_score(w, norm["b"], cap.ADDITIVE)
    cfg = TpeConfig(n_trials=200, n_startup=20, seed=3)
    best = {m: cap.optimize_weights(norm[m], cap.ADDITIVE, cfg).best_value for m in norm}
    assert best["a"] >= best["b"]


def test_derive_seed_stable():
    assert cap.derive_seed(0, "tsne") == cap.derive_seed(0, "tsne")
    seeds = PipelineConfig(seed=5).seeds()
    assert len(set(seeds.values())) == len(cap.STAGES)
    assert all(0 <= s < 2**32 for s in seeds.values())


def test_pipeline_config_rejects_unknowns():
    with pytest.raises(cap.CapacityError):
        PipelineConfig(aggregation="mean")
    with pytest.raises(ValueError):
        PipelineConfig(methods=("word2vec",))


def test_bundle_in_range_and_deterministic(data):
    emb = embed_dataset(data, "spike2vec")
    a = cap.compute_bundle(data, emb, FAST)
    b = cap.compute_bundle(data, emb, FAST)
    assert a.bundle == b.bundle
    assert a.bundle.range_violations() == []
    assert a.perplexity == pytest.approx(44 / 3)


def test_identical_rows_bundle(data):
    emb = EmbeddingMatrix(np.ones((len(data), 5)), data.ids, "pwm2vec")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        detail = cap.compute_bundle(data, emb, FAST)
    assert detail.bundle.acc_class == pytest.approx(1 / 3, abs=0.05)
    assert detail.bundle.score_clust == 0.0


def test_misaligned_embedding(data):
    vals = embed_dataset(data, "spike2vec").values
    emb = EmbeddingMatrix(vals, list(reversed(data.ids)), "spike2vec")
    with pytest.raises(cap.StageError, match="embed"):
        cap.compute_bundle(data, emb, FAST)


def test_stage_error_carries_context(data):
    bad = replace(FAST, tsne=TsneConfig(iterations=120, momentum_switch=30,
                                        exaggeration_iters=30, learning_rate=-1.0))
    emb = embed_dataset(data, "spike2vec")
    with pytest.raises(cap.StageError) as err:
        cap.compute_bundle(data, emb, bad)
    assert err.value.stage == "tsne" and "[spike2vec/tsne]" in str(err.value)


def test_report_self_consistent(report):
    assert [r.method for r in report.rows] == ["pwm2vec", "spike2vec"]
    for name, rc in report.recompute_rc().items():
        assert abs(rc - report.row(name).rc) <= 1e-12
    top = np.max([r.normalized.as_array() for r in report.rows], axis=0)
    assert np.all(top == 1.0)


def test_as_written_weights_avoid_subtracted_block(report):
    for r in report.rows:
        w = cap.optimize_weights(r.normalized, cap.AS_WRITTEN, TpeConfig(seed=7)).best_weights
        assert w.w_neighb + w.w_trust < 0.05


def test_report_serialization(report):
    data = json.loads(report.to_json())
    assert data["aggregation"] == cap.AS_WRITTEN and "note" in data
    back = cap.CapacityReport.from_dict(data)
    assert back.to_json() == report.to_json()
    lines = report.to_csv().splitlines()
    assert lines[0] == "method,rc,w_class,w_clust,w_neighb,w_trust"
    assert len(lines) == 3 and "(" in lines[1]
    assert "aggregation: as-written" in report.console_table()


def test_report_deterministic(data, report):
    again = cap.evaluate_all(data, FAST)
    assert again.to_json() == report.to_json()


def test_additive_mode(data):
    rep = cap.evaluate_all(data, replace(FAST, aggregation=cap.ADDITIVE, methods=("spike2vec",)))
    row = rep.rows[0]
    assert row.normalized.as_array().tolist() == [1.0, 1.0, 1.0, 1.0]
    assert row.rc == pytest.approx(1.0)


def bundled_tables():
    return resources.files("repcap").joinpath("data/reported_tables.csv").read_text()


def test_audit_fixture():
    rows = cap.parse_table_csv(bundled_tables())
    assert len(rows) == 12 and {r.table for r in rows} == {"T1", "T2", "T3"}
    results = cap.audit_rows(rows)
    first = results[0]
    assert first.row.method == "Spike2Vec"
    assert first.literal_raw == pytest.approx(0.1539, abs=5e-4)
    assert first.additive_raw == pytest.approx(0.7765, abs=5e-4)
    assert abs(first.deltas()["additive_raw"] - (first.additive_raw - 0.7638)) < 1e-12
    text = cap.format_audit(results)
    assert "Spike2Vec" in text and "0.7638" in text


def test_audit_normalized_per_table():
    text = (
        ",".join(cap.AUDIT_COLUMNS) + "\n"
        "A,x,0.5,1,0.5,0,1,0,1,0,1\n"
        "A,y,0.5,1,1.0,0,1,0,1,0,1\n"
        "B,z,0.5,1,0.25,0,1,0,1,0,1\n"
    )
    res = cap.audit_rows(cap.parse_table_csv(text))
    assert [r.additive_normalized for r in res] == [0.5, 1.0, 1.0]


def test_audit_weight_sum_warning():
    text = ",".join(cap.AUDIT_COLUMNS) + "\nA,x,0.5,0.5,1,0.1,1,0,1,0,1\n"
    with pytest.warns(UserWarning, match="sum"):
        cap.audit_rows(cap.parse_table_csv(text))


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("table,method\nA,x\n", "lacks columns"),
        (",".join(cap.AUDIT_COLUMNS) + "\n", "no data rows"),
        (",".join(cap.AUDIT_COLUMNS) + "\nA,x,abc,1,1,0,1,0,1,0,1\n", "line 2"),
    ],
)
def test_audit_parse_errors(text, fragment):
    with pytest.raises(cap.CapacityError, match=fragment):
        cap.parse_table_csv(text)
