"""Dataset schemas, the eight-emotion label scheme, vocabulary, word vectors,
and a synthetic correlated-label generator used by the verification suite.

Instance files are UTF-8 JSON Lines. Required keys per line: ``story_id``
(string), ``line`` (integer >= 1), ``character`` (string), ``sentence``
(array of strings), ``context`` (array of arrays of strings). ``labels``
(array of label names) is optional; lines without it describe unlabeled
instances. Tokens arrive pre-split; this library lowercases and does no
further tokenization.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import seeded_rng

LABELS = ("joy", "trust", "fear", "surprise", "sadness", "disgust", "anger", "anticipation")
NUM_LABELS = len(LABELS)
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}


class DataError(ValueError):
    """Malformed input data (bad JSON, unknown labels, dimension mismatches)."""


def label_vector(names: list[str] | tuple[str, ...]) -> list[int]:
    """Binary vector in canonical label order from a list of label names."""
    vec = [0] * NUM_LABELS
    for name in names:
        if name not in LABEL_INDEX:
            raise DataError(f"unknown label '{name}'")
        vec[LABEL_INDEX[name]] = 1
    return vec


def label_names(vector) -> list[str]:
    return [LABELS[i] for i, bit in enumerate(vector) if bit]


@dataclass
class LabeledInstance:
    """One character-line pair with its gold emotion labels.

    ``sentence`` is the target event; ``context`` holds the preceding story
    sentences that mention the character, in story order; ``labels`` is a
    binary vector of length 8 in canonical label order.
    """

    story_id: str
    line: int
    character: str
    sentence: list[str]
    context: list[list[str]]
    labels: list[int]


@dataclass
class UnlabeledInstance:
    story_id: str
    line: int
    character: str
    sentence: list[str]
    context: list[list[str]]


Instance = LabeledInstance | UnlabeledInstance


def instance_to_json(instance: Instance) -> dict:
    obj = {
        "story_id": instance.story_id,
        "line": instance.line,
        "character": instance.character,
        "sentence": list(instance.sentence),
        "context": [list(s) for s in instance.context],
    }
    if isinstance(instance, LabeledInstance):
        obj["labels"] = label_names(instance.labels)
    return obj


def _parse_instance(obj: dict, labeled: bool, lineno: int) -> Instance:
    for key, kind in (("story_id", str), ("line", int), ("character", str),
                      ("sentence", list), ("context", list)):
        if key not in obj:
            raise DataError(f"missing required field '{key}' at line {lineno}")
        if not isinstance(obj[key], kind) or (key == "line" and isinstance(obj[key], bool)):
            raise DataError(f"field '{key}' has wrong type at line {lineno}")
    if obj["line"] < 1:
        raise DataError(f"field 'line' must be >= 1 at line {lineno}")
    sentence = [str(t) for t in obj["sentence"]]
    if not sentence:
        raise DataError(f"empty sentence at line {lineno}")
    context = [[str(t) for t in s] for s in obj["context"]]
    if not labeled:
        return UnlabeledInstance(obj["story_id"], obj["line"], obj["character"], sentence, context)
    if "labels" not in obj:
        raise DataError(f"missing required field 'labels' at line {lineno}")
    try:
        labels = label_vector(obj["labels"])
    except DataError as exc:
        raise DataError(f"{exc} at line {lineno}") from None
    return LabeledInstance(obj["story_id"], obj["line"], obj["character"], sentence, context, labels)


def load_instances(path, labeled: bool = True) -> list[Instance]:
    """Parse a JSON Lines instance file, preserving file order.

    With ``labeled=True`` every line must carry a ``labels`` array; with
    ``labeled=False`` any ``labels`` keys are ignored.
    """
    instances = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON at line {lineno}: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"expected a JSON object at line {lineno}")
            instances.append(_parse_instance(obj, labeled, lineno))
    return instances


def save_instances(path, instances: list[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for instance in instances:
            handle.write(json.dumps(instance_to_json(instance)) + "\n")


@dataclass
class WordVectorTable:
    """Pre-trained word vectors: token -> real vector, all of one dimension."""

    dimension: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token.lower())

    def __len__(self) -> int:
        return len(self.vectors)


def load_word_vectors(path, expected_dim: int) -> WordVectorTable:
    """Load plain-text vectors, one "token v1 v2 ... vd" per line."""
    table = WordVectorTable(dimension=expected_dim)
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            parts = raw.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != expected_dim:
                raise DataError(
                    f"expected {expected_dim} values for token '{token}' at line {lineno}, "
                    f"got {len(values)}"
                )
            try:
                table.vectors[token.lower()] = np.array([float(v) for v in values])
            except ValueError:
                raise DataError(f"non-numeric vector entry at line {lineno}") from None
    return table


class Vocabulary:
    """Token -> index map with reserved padding, unknown, and separator slots.

    Lookups lowercase; unseen tokens map to the unknown index. Index 0 is
    reserved for padding and never produced by :meth:`encode`.
    """

    PAD_TOKEN = "<pad>"
    UNK_TOKEN = "<unk>"
    SEP_TOKEN = "<sep>"
    PAD = 0
    UNK = 1
    SEP = 2

    def __init__(self, tokens: list[str] | None = None):
        self._index = {self.PAD_TOKEN: self.PAD, self.UNK_TOKEN: self.UNK, self.SEP_TOKEN: self.SEP}
        for token in tokens or []:
            self.add(token)

    def add(self, token: str) -> int:
        token = token.lower()
        if token not in self._index:
            self._index[token] = len(self._index)
        return self._index[token]

    def index(self, token: str) -> int:
        return self._index.get(token.lower(), self.UNK)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._index

    def __len__(self) -> int:
        return len(self._index)

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.intp)

    def tokens(self) -> list[str]:
        return sorted(self._index, key=self._index.get)

    @classmethod
    def build(cls, instances: list[Instance], extra_tokens: list[str] | None = None) -> "Vocabulary":
        """Deterministic vocabulary: sorted unique tokens from the corpus plus
        any extras (label lexicon, template words)."""
        seen = set()
        for instance in instances:
            seen.update(t.lower() for t in instance.sentence)
            for sent in instance.context:
                seen.update(t.lower() for t in sent)
            seen.add(instance.character.lower())
        seen.update(t.lower() for t in extra_tokens or [])
        return cls(sorted(seen))

    def to_json(self) -> dict:
        return {"tokens": self.tokens()}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        tokens = obj["tokens"]
        reserved = [cls.PAD_TOKEN, cls.UNK_TOKEN, cls.SEP_TOKEN]
        if tokens[: len(reserved)] != reserved:
            raise DataError("vocabulary is missing its reserved entries")
        return cls(tokens[len(reserved):])


# ---------------------------------------------------------------------------
# Synthetic correlated-label data
# ---------------------------------------------------------------------------

_SYNTH_CHARACTERS = ("alex", "dana", "morgan", "riley")


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic correlated-label dataset.

    Labels are drawn by thresholding a zero-mean latent Gaussian with
    covariance ``target_corr`` at zero, so every label has marginal
    probability 0.5 and pairwise structure controlled by the latent
    correlations (attenuated by the thresholding). Each positive label plants
    its own cue token (the label name) into the sentence with probability
    ``signal_strength``; all remaining slots are uniform filler tokens.
    """

    n: int
    target_corr: np.ndarray
    vocab_size: int = 50
    sentence_len: int = 12
    signal_strength: float = 0.7


def corr_from_pairs(pairs: dict[tuple[str, str], float] | None = None) -> np.ndarray:
    """Identity correlation matrix with selected label pairs overridden."""
    corr = np.eye(NUM_LABELS)
    for (a, b), rho in (pairs or {}).items():
        i, j = LABEL_INDEX[a], LABEL_INDEX[b]
        corr[i, j] = corr[j, i] = rho
    return corr


def _validate_target_corr(corr: np.ndarray) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (NUM_LABELS, NUM_LABELS):
        raise DataError(f"target_corr must be {NUM_LABELS}x{NUM_LABELS}")
    if not np.allclose(corr, corr.T, atol=1e-9):
        raise DataError("target_corr must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-9):
        raise DataError("target_corr must have a unit diagonal")
    if np.any(np.abs(corr) > 1.0 + 1e-9):
        raise DataError("target_corr entries must lie in [-1, 1]")
    eigenvalues = np.linalg.eigvalsh(corr)
    if eigenvalues.min() < -1e-9:
        raise DataError("target_corr must be positive semi-definite")
    return corr


def gen_synthetic(spec: SyntheticSpec, seed: int) -> list[LabeledInstance]:
    """Generate a labeled dataset with planted pairwise label correlations."""
    corr = _validate_target_corr(spec.target_corr)
    rng = seeded_rng(seed)

    # Symmetric square root keeps the factorization defined for singular
    # (still PSD) targets where a Cholesky factor would not exist.
    eigenvalues, eigenvectors = np.linalg.eigh(corr)
    root = eigenvectors @ np.diag(np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
    latent = rng.standard_normal((spec.n, NUM_LABELS)) @ root
    labels = (latent > 0.0).astype(int)

    fillers = [f"w{i:03d}" for i in range(spec.vocab_size)]
    instances = []
    for row, bits in enumerate(labels):
        cues = [
            LABELS[k]
            for k in range(NUM_LABELS)
            if bits[k] and rng.random() < spec.signal_strength
        ]
        n_fill = max(0, spec.sentence_len - len(cues))
        tokens = cues + [fillers[i] for i in rng.integers(0, spec.vocab_size, size=n_fill)]
        rng.shuffle(tokens)
        instances.append(
            LabeledInstance(
                story_id=f"synth-{row:05d}",
                line=1,
                character=_SYNTH_CHARACTERS[row % len(_SYNTH_CHARACTERS)],
                sentence=tokens,
                context=[],
                labels=[int(b) for b in bits],
            )
        )
    return instances


def strip_labels(instances: list[LabeledInstance]) -> list[UnlabeledInstance]:
    """Drop gold labels, e.g. to build an unlabeled pool from synthetic data."""
    return [
        UnlabeledInstance(i.story_id, i.line, i.character, list(i.sentence),
                          [list(s) for s in i.context])
        for i in instances
    ]
