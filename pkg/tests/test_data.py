"""Instance parsing, word vectors, vocabulary, and the synthetic generator."""

import json
import math

import numpy as np
import pytest

from labelsem.data import (
    LABELS,
    NUM_LABELS,
    DataError,
    LabeledInstance,
    SyntheticSpec,
    UnlabeledInstance,
    Vocabulary,
    corr_from_pairs,
    gen_synthetic,
    instance_to_json,
    label_vector,
    load_instances,
    load_word_vectors,
    save_instances,
)
from labelsem.evaluation import empirical_correlations

# Binary correlation left after thresholding a latent Gaussian pair at zero:
# 2/pi * arcsin(rho). Frozen from a 10^6-sample simulation which matched the
# closed form to +/-0.002 (rho = -0.6 gives -0.410).
ATTENUATED_06 = 2.0 / math.pi * math.asin(0.6)


class TestLabelScheme:
    def test_eight_labels_in_canonical_order(self):
        assert LABELS == (
            "joy", "trust", "fear", "surprise", "sadness", "disgust", "anger", "anticipation",
        )
        assert NUM_LABELS == 8

    def test_label_vector_applies_canonical_order(self):
        assert label_vector(["fear", "sadness"]) == [0, 0, 1, 0, 1, 0, 0, 0]

    def test_unknown_label_rejected(self):
        with pytest.raises(DataError, match="unknown label 'happiness'"):
            label_vector(["happiness"])


class TestLoadInstances:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_instances(path) == []

    def test_documented_example(self, tmp_path):
        record = {
            "story_id": "s1", "line": 2, "character": "Danielle",
            "sentence": ["short", "on", "money"],
            "context": [["danielle", "was", "broke"]],
            "labels": ["fear", "sadness"],
        }
        path = tmp_path / "one.jsonl"
        path.write_text(json.dumps(record) + "\n")
        (instance,) = load_instances(path)
        assert instance.labels == [0, 0, 1, 0, 1, 0, 0, 0]
        assert instance.character == "Danielle"
        assert instance.context == [["danielle", "was", "broke"]]

    def test_unknown_label_names_the_line(self, tmp_path):
        good = {"story_id": "s", "line": 1, "character": "c",
                "sentence": ["x"], "context": [], "labels": ["joy"]}
        bad = dict(good, labels=["happiness"])
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(DataError, match="unknown label 'happiness' at line 2"):
            load_instances(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "missing.jsonl"
        path.write_text('{"story_id": "s", "line": 1}\n')
        with pytest.raises(DataError, match="missing required field"):
            load_instances(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"story_id": "s"\n')
        with pytest.raises(DataError, match="malformed JSON at line 1"):
            load_instances(path)

    def test_missing_labels_required_when_labeled(self, tmp_path):
        path = tmp_path / "nolabels.jsonl"
        path.write_text(json.dumps({
            "story_id": "s", "line": 1, "character": "c",
            "sentence": ["x"], "context": [],
        }) + "\n")
        with pytest.raises(DataError, match="labels"):
            load_instances(path, labeled=True)
        (instance,) = load_instances(path, labeled=False)
        assert isinstance(instance, UnlabeledInstance)

    def test_empty_sentence_rejected(self, tmp_path):
        path = tmp_path / "empty_sentence.jsonl"
        path.write_text(json.dumps({
            "story_id": "s", "line": 1, "character": "c",
            "sentence": [], "context": [], "labels": [],
        }) + "\n")
        with pytest.raises(DataError, match="empty sentence"):
            load_instances(path)

    def test_round_trip(self, tmp_path):
        instance = LabeledInstance(
            story_id="s9", line=3, character="Mark",
            sentence=["he", "was", "glad"],
            context=[["mark", "arrived"], ["mark", "sat", "down"]],
            labels=label_vector(["joy", "anticipation"]),
        )
        path = tmp_path / "roundtrip.jsonl"
        save_instances(path, [instance])
        (reparsed,) = load_instances(path)
        assert reparsed == instance
        assert instance_to_json(reparsed) == instance_to_json(instance)

    def test_label_vectors_always_length_eight(self, tmp_path):
        rows = [
            {"story_id": f"s{i}", "line": 1, "character": "c",
             "sentence": ["tok"], "context": [], "labels": names}
            for i, names in enumerate([[], ["joy"], list(LABELS)])
        ]
        path = tmp_path / "many.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        for instance in load_instances(path):
            assert len(instance.labels) == NUM_LABELS


class TestWordVectors:
    def test_two_entry_fixture(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("joy 0.1 0.2\nfear 0.3 0.4\n")
        table = load_word_vectors(path, expected_dim=2)
        assert len(table) == 2
        np.testing.assert_allclose(table.get("joy"), [0.1, 0.2])
        np.testing.assert_allclose(table.get("fear"), [0.3, 0.4])

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("")
        table = load_word_vectors(path, expected_dim=4)
        assert len(table) == 0

    def test_dimension_mismatch_names_the_line(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("joy 0.1 0.2\nfear 0.3 0.4 0.5\n")
        with pytest.raises(DataError, match="line 2"):
            load_word_vectors(path, expected_dim=2)


class TestVocabulary:
    def test_reserved_indices(self):
        vocab = Vocabulary(["alpha", "beta"])
        assert vocab.index(Vocabulary.PAD_TOKEN) == 0
        assert vocab.index(Vocabulary.UNK_TOKEN) == 1
        assert vocab.index(Vocabulary.SEP_TOKEN) == 2

    def test_lowercasing_and_unknowns(self):
        vocab = Vocabulary(["Alpha"])
        assert vocab.index("ALPHA") == vocab.index("alpha")
        assert vocab.index("never-seen") == Vocabulary.UNK

    def test_bijective_over_non_reserved(self):
        vocab = Vocabulary([f"t{i}" for i in range(40)])
        indices = [vocab.index(f"t{i}") for i in range(40)]
        assert len(set(indices)) == 40
        assert min(indices) == 3

    def test_json_round_trip(self):
        vocab = Vocabulary(["one", "two", "three"])
        again = Vocabulary.from_json(vocab.to_json())
        assert again.tokens() == vocab.tokens()


def _planted_spec(n, strength=0.7):
    return SyntheticSpec(
        n=n,
        target_corr=corr_from_pairs({("joy", "sadness"): -0.6, ("joy", "trust"): 0.6}),
        vocab_size=30,
        sentence_len=10,
        signal_strength=strength,
    )


class TestSyntheticGenerator:
    def test_identity_correlations_are_near_zero(self):
        data = gen_synthetic(SyntheticSpec(n=5000, target_corr=np.eye(8)), seed=101)
        observed = empirical_correlations([i.labels for i in data])
        off_diag = observed[~np.eye(8, dtype=bool)]
        assert np.all(np.abs(off_diag) <= 0.05)

    def test_planted_pair_matches_attenuation_oracle(self):
        data = gen_synthetic(_planted_spec(5000), seed=55)
        observed = empirical_correlations([i.labels for i in data])
        joy, sadness, trust = 0, 4, 1
        assert observed[joy, sadness] == pytest.approx(-ATTENUATED_06, abs=0.05)
        assert observed[joy, trust] == pytest.approx(ATTENUATED_06, abs=0.05)

    def test_attenuation_oracle_against_simulation(self):
        # independent brute-force simulation of one thresholded Gaussian pair
        rng = np.random.default_rng(7)
        n = 1_000_000
        z1 = rng.standard_normal(n)
        z2 = -0.6 * z1 + math.sqrt(1 - 0.36) * rng.standard_normal(n)
        phi = np.corrcoef((z1 > 0).astype(float), (z2 > 0).astype(float))[0, 1]
        assert phi == pytest.approx(-ATTENUATED_06, abs=0.005)

    def test_marginals_near_one_half(self):
        data = gen_synthetic(_planted_spec(10_000), seed=17)
        rates = np.mean([i.labels for i in data], axis=0)
        assert np.all(np.abs(rates - 0.5) <= 0.03)

    def test_same_seed_same_dataset(self):
        a = gen_synthetic(_planted_spec(200), seed=9)
        b = gen_synthetic(_planted_spec(200), seed=9)
        assert a == b

    def test_cue_tokens_track_signal_strength(self):
        data = gen_synthetic(_planted_spec(4000, strength=0.7), seed=23)
        with_joy = [i for i in data if i.labels[0] == 1]
        without_joy = [i for i in data if i.labels[0] == 0]
        hit = np.mean(["joy" in i.sentence for i in with_joy])
        miss = np.mean(["joy" in i.sentence for i in without_joy])
        assert hit == pytest.approx(0.7, abs=0.05)
        assert miss == 0.0

    def test_non_psd_target_rejected(self):
        target = corr_from_pairs({("joy", "sadness"): -0.9, ("joy", "trust"): 0.9,
                                  ("trust", "sadness"): 0.9})
        with pytest.raises(DataError, match="positive semi-definite"):
            gen_synthetic(SyntheticSpec(n=10, target_corr=target), seed=1)

    def test_asymmetric_target_rejected(self):
        target = np.eye(8)
        target[0, 1] = 0.5
        with pytest.raises(DataError, match="symmetric"):
            gen_synthetic(SyntheticSpec(n=10, target_corr=target), seed=1)
