"""The classifier: configuration, parameters, forward pass, hand-derived
backward pass, and artifact serialization.

Four variants form an ablation ladder. ``baseline`` mean-pools the token
states; ``leam`` pools them with label-embedding attention; ``leam_corr``
adds the learned correlation head to inference and the training loss;
``leam_corr_semi`` shares its parameters and additionally consumes unlabeled
batches during training (see :mod:`labelsem.training`).

Model artifacts are a directory holding ``metadata.json`` (format version,
config, label scheme, vocabulary) and ``weights.bin`` (magic "LSML", format
version, then per-tensor records: name length, name, rows, cols, row-major
64-bit little-endian floats). Loading an artifact reproduces the saved
model's predictions bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attention, correlation, encoder
from .data import (
    LABELS,
    NUM_LABELS,
    Instance,
    LabeledInstance,
    Vocabulary,
    WordVectorTable,
)
from .encoder import EncoderParams, LabelEmbeddingBank
from .evaluation import empirical_correlations
from .numerics import Params, seeded_rng, uniform_init

VARIANTS = ("baseline", "leam", "leam_corr", "leam_corr_semi")

ARTIFACT_MAGIC = b"LSML"
ARTIFACT_VERSION = 1
METADATA_FILE = "metadata.json"
WEIGHTS_FILE = "weights.bin"


class VariantError(RuntimeError):
    """An operation was requested that the model's variant does not support."""


class ArtifactError(RuntimeError):
    """A saved model directory is missing, corrupt, or incompatible."""


@dataclass
class ModelConfig:
    """Everything that determines a training run, JSON-serializable.

    ``variant`` gates which tensors exist and which loss terms run.
    ``labels_as_input`` appends the label template sentences to the input and
    switches the label embeddings to their dynamically encoded form.
    ``separate_context`` pools context and target sentence independently and
    concatenates the two pooled vectors.
    """

    variant: str = "leam_corr"
    dim: int = 64
    window: int = 1
    corr_weight: float = 1.0
    threshold: float = 0.5
    step_size: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    seed: int = 13
    labels_as_input: bool = False
    separate_context: bool = False
    optimizer: str = "adam"
    corr_init: str = "empirical"
    corr_step_scale: float = 0.1
    semi_ratio: int = 1
    freeze_corr: bool = False
    patience: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}' (expected one of {VARIANTS})")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.corr_init not in ("empirical", "identity"):
            raise ValueError("corr_init must be 'empirical' or 'identity'")

    @property
    def uses_attention(self) -> bool:
        return self.variant != "baseline"

    @property
    def uses_correlation(self) -> bool:
        return self.variant in ("leam_corr", "leam_corr_semi")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class _PartCache:
    """Forward intermediates for one encoded token sequence."""

    token_ids: np.ndarray
    states: np.ndarray
    compat: np.ndarray | None = None
    attn: attention.AttentionCache | None = None


@dataclass
class ForwardCache:
    parts: list[_PartCache | None]
    bank: LabelEmbeddingBank | None
    label_emb: np.ndarray | None
    pooled: np.ndarray
    logits: np.ndarray
    scores: np.ndarray


class Model:
    """A configured classifier with name-keyed parameter tensors."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        word_vectors: WordVectorTable | None = None,
        corr_init_matrix: np.ndarray | None = None,
    ):
        self.config = config
        self.vocab = vocab
        rng = seeded_rng(config.seed)
        d = config.dim
        pooled_dim = 2 * d if config.separate_context else d
        params: Params = {
            "embeddings": uniform_init(rng, len(vocab), d),
            "mix_weights": uniform_init(rng, d, 3 * d),
            "mix_bias": uniform_init(rng, d),
            "cls_weights": uniform_init(rng, NUM_LABELS, pooled_dim),
            "cls_bias": uniform_init(rng, NUM_LABELS),
        }
        if word_vectors is not None:
            if word_vectors.dimension != d:
                raise ValueError(
                    f"word vectors are {word_vectors.dimension}-d but the model dim is {d}"
                )
            for token, vector in word_vectors.vectors.items():
                if token in vocab:
                    params["embeddings"][vocab.index(token)] = vector
        if config.uses_attention and not config.labels_as_input:
            params["label_emb"] = uniform_init(rng, NUM_LABELS, d)
            if word_vectors is not None:
                for k, name in enumerate(LABELS):
                    vector = word_vectors.get(name)
                    if vector is not None:
                        params["label_emb"][k] = vector
        if config.uses_correlation:
            if corr_init_matrix is not None:
                corr = np.array(corr_init_matrix, dtype=float, copy=True)
                if corr.shape != (NUM_LABELS, NUM_LABELS):
                    raise ValueError("correlation init matrix must be KxK")
            else:
                corr = np.eye(NUM_LABELS)
            params["corr"] = corr
        self.params = params

    # -- construction helpers ------------------------------------------------

    @classmethod
    def build(
        cls,
        config: ModelConfig,
        train_instances: list[LabeledInstance],
        word_vectors: WordVectorTable | None = None,
    ) -> "Model":
        """Build vocabulary and initial tensors from the training set.

        With ``corr_init="empirical"`` the correlation matrix starts from the
        training labels' empirical correlations, blended half-and-half with
        the identity; "identity" skips the data-driven part (ablation).
        """
        extras = list(LABELS) + ["is"] + list(encoder.STATE_ADJECTIVES.values())
        vocab = Vocabulary.build(train_instances, extras)
        corr_matrix = None
        if config.uses_correlation and config.corr_init == "empirical":
            observed = empirical_correlations([i.labels for i in train_instances])
            corr_matrix = 0.5 * np.eye(NUM_LABELS) + 0.5 * observed
        return cls(config, vocab, word_vectors=word_vectors, corr_init_matrix=corr_matrix)

    # -- parameter access ----------------------------------------------------

    @property
    def has_correlation(self) -> bool:
        return "corr" in self.params

    @property
    def correlation_matrix(self) -> np.ndarray:
        if not self.has_correlation:
            raise VariantError(
                f"variant '{self.config.variant}' has no correlation matrix"
            )
        return self.params["corr"]

    def trainable_names(self) -> list[str]:
        names = [n for n in self.params if not (n == "corr" and self.config.freeze_corr)]
        return names

    def zero_grads(self) -> Params:
        return {name: np.zeros_like(self.params[name]) for name in self.params}

    # -- forward -------------------------------------------------------------

    def _token_parts(self, instance: Instance) -> list[np.ndarray | None]:
        mode = "labels_as_input" if self.config.labels_as_input else "plain"
        if not self.config.separate_context:
            return [self.vocab.encode(encoder.assemble_input(instance, mode))]
        context_tokens = encoder.join_sentences(list(instance.context))
        sentence_tokens = list(instance.sentence)
        if self.config.labels_as_input:
            for sentence in encoder.label_sentences(instance.character):
                sentence_tokens.append(encoder.SEP)
                sentence_tokens.extend(sentence)
        return [
            self.vocab.encode(context_tokens) if context_tokens else None,
            self.vocab.encode(sentence_tokens),
        ]

    def _encoder_params(self) -> EncoderParams:
        return EncoderParams(
            embeddings=self.params["embeddings"],
            mix_weights=self.params["mix_weights"],
            mix_bias=self.params["mix_bias"],
        )

    def _label_bank(self, instance: Instance) -> LabelEmbeddingBank:
        if self.config.labels_as_input:
            return LabelEmbeddingBank.dynamic(instance.character, self.vocab)
        return LabelEmbeddingBank.static(self.params["label_emb"])

    def forward(self, instance: Instance) -> ForwardCache:
        config = self.config
        enc = self._encoder_params()
        bank = label_emb = None
        if config.uses_attention:
            bank = self._label_bank(instance)
            label_emb = encoder.label_embeddings(bank, enc)

        parts: list[_PartCache | None] = []
        pooled_parts = []
        for token_ids in self._token_parts(instance):
            if token_ids is None:
                parts.append(None)
                pooled_parts.append(np.zeros(config.dim))
                continue
            states = encoder.encode_tokens(token_ids, enc)
            part = _PartCache(token_ids=token_ids, states=states)
            if config.uses_attention:
                part.compat = attention.compatibility(label_emb, states)
                result, part.attn = attention.attend_with_cache(
                    part.compat, states, config.window
                )
                pooled_parts.append(result.pooled)
            else:
                pooled_parts.append(states.mean(axis=0))
            parts.append(part)
        pooled = np.concatenate(pooled_parts) if len(pooled_parts) > 1 else pooled_parts[0]

        logits = self.params["cls_weights"] @ pooled + self.params["cls_bias"]
        if config.uses_correlation:
            scores = correlation.correlate_logits(logits, self.params["corr"])
        else:
            scores = correlation.sigmoid(logits)
        return ForwardCache(parts, bank, label_emb, pooled, logits, scores)

    def predict_scores(self, instance: Instance) -> np.ndarray:
        return self.forward(instance).scores

    def predict(self, instance: Instance, threshold: float | None = None) -> correlation.PredictionRecord:
        cache = self.forward(instance)
        cut = self.config.threshold if threshold is None else threshold
        names = [LABELS[k] for k in range(NUM_LABELS) if cache.scores[k] >= cut]
        return correlation.PredictionRecord(logits=cache.logits, scores=cache.scores, labels=names)

    def logits(self, instance: Instance) -> np.ndarray:
        return self.forward(instance).logits

    # -- backward ------------------------------------------------------------

    def _backward(self, cache: ForwardCache, d_logits: np.ndarray, grads: Params) -> None:
        config = self.config
        enc = self._encoder_params()
        grads["cls_weights"] += np.outer(d_logits, cache.pooled)
        grads["cls_bias"] += d_logits
        d_pooled = self.params["cls_weights"].T @ d_logits

        d_label_emb = (
            np.zeros_like(cache.label_emb) if cache.label_emb is not None else None
        )
        offset = 0
        for part in cache.parts:
            d_part = d_pooled[offset: offset + config.dim]
            offset += config.dim
            if part is None:
                continue
            if config.uses_attention:
                d_compat, d_states = attention.attend_backward(
                    np.zeros_like(part.attn.alpha), d_part, part.attn,
                    part.states, config.window,
                )
                d_emb, d_states_cos = attention.compatibility_backward(
                    cache.label_emb, part.states, part.compat, d_compat
                )
                d_label_emb += d_emb
                d_states += d_states_cos
            else:
                d_states = np.tile(d_part / part.states.shape[0], (part.states.shape[0], 1))
            encoder.encode_backward(part.token_ids, enc, part.states, d_states, grads)
        if d_label_emb is not None:
            encoder.label_embeddings_backward(cache.bank, enc, d_label_emb, grads)

    def loss_and_grads(self, batch: list[LabeledInstance]) -> tuple[float, Params]:
        """Mean dual loss over the batch and gradients for every tensor."""
        if not batch:
            raise ValueError("batch must be non-empty")
        grads = self.zero_grads()
        total = 0.0
        scale = 1.0 / len(batch)
        for instance in batch:
            cache = self.forward(instance)
            y = np.asarray(instance.labels, dtype=float)
            if self.config.uses_correlation:
                loss, _, d_logits, d_corr = correlation.total_loss_grads(
                    cache.logits, y, self.params["corr"], self.config.corr_weight
                )
                grads["corr"] += scale * d_corr
            else:
                loss, _, d_logits = correlation.plain_loss_grads(cache.logits, y)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss on instance {instance.story_id!r} "
                    f"(logits range [{cache.logits.min():.3g}, {cache.logits.max():.3g}])"
                )
            total += loss
            self._backward(cache, scale * d_logits, grads)
        return total * scale, grads

    def batch_logits(self, instances: list[Instance]) -> np.ndarray:
        """Stacked logits for a batch, e.g. for the unlabeled regularizer."""
        return np.stack([self.forward(i).logits for i in instances])

    # -- serialization -------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        metadata = {
            "format_version": ARTIFACT_VERSION,
            "config": self.config.to_json(),
            "labels": list(LABELS),
            "vocabulary": self.vocab.to_json(),
        }
        (directory / METADATA_FILE).write_text(json.dumps(metadata, indent=2))
        with open(directory / WEIGHTS_FILE, "wb") as handle:
            handle.write(ARTIFACT_MAGIC)
            handle.write(struct.pack("<I", ARTIFACT_VERSION))
            for name in sorted(self.params):
                tensor = np.atleast_2d(self.params[name])
                encoded = name.encode("utf-8")
                handle.write(struct.pack("<I", len(encoded)))
                handle.write(encoded)
                handle.write(struct.pack("<II", tensor.shape[0], tensor.shape[1]))
                handle.write(tensor.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, directory) -> "Model":
        directory = Path(directory)
        meta_path = directory / METADATA_FILE
        weights_path = directory / WEIGHTS_FILE
        if not meta_path.exists() or not weights_path.exists():
            raise ArtifactError(f"no model artifact found in {directory}")
        try:
            metadata = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"corrupt model metadata: {exc.msg}") from None
        if metadata.get("format_version") != ARTIFACT_VERSION:
            raise ArtifactError(
                f"unsupported model format version {metadata.get('format_version')!r}"
            )
        config = ModelConfig.from_json(metadata["config"])
        vocab = Vocabulary.from_json(metadata["vocabulary"])
        model = cls(config, vocab)
        tensors = _read_weights(weights_path)
        for name in model.params:
            if name not in tensors:
                raise ArtifactError(f"weights file is missing tensor '{name}'")
            loaded = tensors[name]
            expected = model.params[name]
            if expected.ndim == 1:
                loaded = loaded.reshape(-1)
            if loaded.shape != expected.shape:
                raise ArtifactError(
                    f"tensor '{name}' has shape {loaded.shape}, expected {expected.shape}"
                )
            model.params[name] = loaded
        return model


def _read_weights(path: Path) -> dict[str, np.ndarray]:
    blob = path.read_bytes()
    if blob[:4] != ARTIFACT_MAGIC:
        raise ArtifactError("unrecognized model file")
    offset = 4

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise ArtifactError("truncated weights file")
        piece = blob[offset: offset + count]
        offset += count
        return piece

    (version,) = struct.unpack("<I", take(4))
    if version != ARTIFACT_VERSION:
        raise ArtifactError(f"unsupported weights format version {version}")
    tensors = {}
    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        data = np.frombuffer(take(rows * cols * 8), dtype="<f8")
        tensors[name] = data.reshape(rows, cols).astype(float)
    return tensors
