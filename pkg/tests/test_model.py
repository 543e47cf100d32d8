"""Variant wiring, forward determinism, and artifact serialization."""

import hashlib
import json

import numpy as np
import pytest

from labelsem.data import SyntheticSpec, WordVectorTable, corr_from_pairs, gen_synthetic
from labelsem.model import (
    ARTIFACT_VERSION,
    ArtifactError,
    Model,
    ModelConfig,
    VariantError,
    WEIGHTS_FILE,
)
from labelsem.verify import check_model_gradients, fixture_instances, fixture_model


def _data(n=50, seed=3):
    spec = SyntheticSpec(
        n=n,
        target_corr=corr_from_pairs({("joy", "sadness"): -0.6, ("joy", "trust"): 0.6}),
        vocab_size=20,
        sentence_len=6,
        signal_strength=0.7,
    )
    return gen_synthetic(spec, seed=seed)


def _params_digest(model, skip=()):
    digest = hashlib.sha256()
    for name in sorted(model.params):
        if name in skip:
            continue
        digest.update(name.encode())
        digest.update(model.params[name].tobytes())
    return digest.hexdigest()


class TestConfig:
    def test_json_round_trip(self):
        config = ModelConfig(variant="leam", dim=16, labels_as_input=True, patience=2)
        again = ModelConfig.from_json(json.loads(json.dumps(config.to_json())))
        assert again == config

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="unknown variant"):
            ModelConfig(variant="transformer")

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown config fields"):
            ModelConfig.from_json({"variant": "leam", "learning_rate": 0.1})

    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            ModelConfig(window=2)


class TestVariantGating:
    def test_baseline_has_no_attention_or_correlation_tensors(self):
        model = Model.build(ModelConfig(variant="baseline", dim=8), _data())
        assert "label_emb" not in model.params and "corr" not in model.params

    def test_leam_adds_label_embeddings(self):
        model = Model.build(ModelConfig(variant="leam", dim=8), _data())
        assert model.params["label_emb"].shape == (8, 8)
        assert not model.has_correlation

    def test_correlation_matrix_raises_on_gless_variants(self):
        model = Model.build(ModelConfig(variant="leam", dim=8), _data())
        with pytest.raises(VariantError, match="no correlation matrix"):
            _ = model.correlation_matrix

    def test_labels_as_input_drops_the_static_matrix(self):
        model = Model.build(ModelConfig(variant="leam", dim=8, labels_as_input=True), _data())
        assert "label_emb" not in model.params

    def test_empirical_correlation_init_blends_with_identity(self):
        data = _data(n=500)
        model = Model.build(ModelConfig(variant="leam_corr", dim=8), data)
        corr = model.correlation_matrix
        # planted negative pair shows up scaled by the 0.5 blend
        assert corr[0, 4] < -0.08
        assert corr[0, 1] > 0.08
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)

    def test_identity_correlation_init(self):
        model = Model.build(ModelConfig(variant="leam_corr", dim=8, corr_init="identity"), _data())
        np.testing.assert_array_equal(model.correlation_matrix, np.eye(8))


class TestForward:
    def test_scores_strictly_interior_and_deterministic(self):
        data = _data()
        model = Model.build(ModelConfig(variant="leam_corr", dim=8), data)
        first = [model.predict_scores(i) for i in data[:10]]
        second = [model.predict_scores(i) for i in data[:10]]
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
            assert np.all(a > 0.0) and np.all(a < 1.0)

    def test_prediction_record_thresholds(self):
        data = _data()
        model = Model.build(ModelConfig(variant="leam", dim=8, threshold=0.5), data)
        record = model.predict(data[0])
        expected = {name for name, s in zip(
            ("joy", "trust", "fear", "surprise", "sadness", "disgust", "anger", "anticipation"),
            record.scores) if s >= 0.5}
        assert set(record.labels) == expected
        everything = model.predict(data[0], threshold=0.0)
        assert len(everything.labels) == 8

    def test_static_label_embeddings_start_from_word_vectors(self):
        vectors = WordVectorTable(dimension=8)
        rng = np.random.default_rng(0)
        vectors.vectors["joy"] = rng.normal(size=8)
        vectors.vectors["w003"] = rng.normal(size=8)
        data = _data()
        model = Model.build(ModelConfig(variant="leam", dim=8), data, word_vectors=vectors)
        np.testing.assert_array_equal(model.params["label_emb"][0], vectors.vectors["joy"])
        np.testing.assert_array_equal(
            model.params["embeddings"][model.vocab.index("w003")], vectors.vectors["w003"]
        )
        np.testing.assert_array_equal(
            model.params["embeddings"][model.vocab.index("joy")], vectors.vectors["joy"]
        )

    def test_word_vector_dimension_must_match(self):
        vectors = WordVectorTable(dimension=5)
        with pytest.raises(ValueError, match="5-d"):
            Model.build(ModelConfig(variant="leam", dim=8), _data(), word_vectors=vectors)


class TestIdentityReduction:
    def test_leam_corr_with_identity_matrix_matches_leam(self):
        data = _data(n=100)
        base = ModelConfig(variant="leam", dim=8, seed=21)
        coupled = ModelConfig(
            variant="leam_corr", dim=8, seed=21,
            corr_init="identity", corr_weight=0.0, freeze_corr=True,
        )
        leam = Model.build(base, data)
        corr = Model.build(coupled, data)
        worst = 0.0
        for instance in data:
            diff = np.abs(leam.predict_scores(instance) - corr.predict_scores(instance))
            worst = max(worst, float(diff.max()))
        assert worst <= 1e-12


class TestFullModelGradients:
    @pytest.mark.parametrize("variant", ["baseline", "leam", "leam_corr", "leam_corr_semi"])
    def test_every_trainable_tensor(self, variant):
        model, batch = fixture_model(variant)
        report = check_model_gradients(model, batch)
        assert report.passed, f"{variant}:\n{report}"

    @pytest.mark.parametrize("overrides", [
        {"labels_as_input": True},
        {"separate_context": True},
        {"window": 3},
    ])
    def test_optional_paths(self, overrides):
        model, batch = fixture_model("leam_corr", **overrides)
        report = check_model_gradients(model, batch)
        assert report.passed, f"{overrides}:\n{report}"

    def test_fixture_instances_stay_short(self):
        for instance in fixture_instances():
            assert len(instance.sentence) <= 5
            assert not instance.context


class TestSerialization:
    def test_round_trip_preserves_predictions_exactly(self, tmp_path):
        data = _data(n=50)
        model = Model.build(ModelConfig(variant="leam_corr", dim=8), data)
        before = [model.predict_scores(i) for i in data]
        model.save(tmp_path / "m")
        loaded = Model.load(tmp_path / "m")
        assert loaded.config == model.config
        for instance, expected in zip(data, before):
            np.testing.assert_array_equal(loaded.predict_scores(instance), expected)

    def test_corrupted_magic_bytes(self, tmp_path):
        model = Model.build(ModelConfig(variant="baseline", dim=8), _data())
        model.save(tmp_path / "m")
        weights = tmp_path / "m" / WEIGHTS_FILE
        blob = bytearray(weights.read_bytes())
        blob[:4] = b"XXXX"
        weights.write_bytes(bytes(blob))
        with pytest.raises(ArtifactError, match="unrecognized model file"):
            Model.load(tmp_path / "m")

    def test_truncated_weights(self, tmp_path):
        model = Model.build(ModelConfig(variant="baseline", dim=8), _data())
        model.save(tmp_path / "m")
        weights = tmp_path / "m" / WEIGHTS_FILE
        blob = weights.read_bytes()
        weights.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ArtifactError, match="truncated"):
            Model.load(tmp_path / "m")

    def test_version_mismatch(self, tmp_path):
        model = Model.build(ModelConfig(variant="baseline", dim=8), _data())
        model.save(tmp_path / "m")
        meta = tmp_path / "m" / "metadata.json"
        obj = json.loads(meta.read_text())
        obj["format_version"] = ARTIFACT_VERSION + 1
        meta.write_text(json.dumps(obj))
        with pytest.raises(ArtifactError, match="format version"):
            Model.load(tmp_path / "m")

    def test_missing_artifact(self, tmp_path):
        with pytest.raises(ArtifactError, match="no model artifact"):
            Model.load(tmp_path / "nothing")

    def test_baseline_artifact_refuses_correlated_inference(self, tmp_path):
        model = Model.build(ModelConfig(variant="baseline", dim=8), _data())
        model.save(tmp_path / "m")
        loaded = Model.load(tmp_path / "m")
        with pytest.raises(VariantError):
            _ = loaded.correlation_matrix

    def test_digest_stable_across_save_load(self, tmp_path):
        model = Model.build(ModelConfig(variant="leam_corr", dim=8), _data())
        model.save(tmp_path / "m")
        loaded = Model.load(tmp_path / "m")
        assert _params_digest(model) == _params_digest(loaded)
