"""Token encoding and label embeddings.

The encoder is intentionally small: an embedding lookup followed by one
window-3 mixing layer with a tanh nonlinearity, so each token state sees its
immediate neighbours and every gradient stays hand-derivable. Label
embeddings come in two flavours: a trainable matrix with one row per label
(static), or the mean-pooled encoding of a per-label template sentence
"<character> is <state adjective>" (dynamic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LABELS, Instance, Vocabulary
from .numerics import Params, uniform_init

# Adjective form of each emotion label, used by the template sentences.
STATE_ADJECTIVES = {
    "joy": "joyful",
    "trust": "trusting",
    "fear": "afraid",
    "surprise": "surprised",
    "sadness": "sad",
    "disgust": "disgusted",
    "anger": "angry",
    "anticipation": "anticipating",
}

SEP = Vocabulary.SEP_TOKEN


def label_sentence(character: str, label: str) -> list[str]:
    return [character.lower(), "is", STATE_ADJECTIVES[label]]


def label_sentences(character: str) -> list[list[str]]:
    """The eight template sentences for one character, in canonical order."""
    return [label_sentence(character, label) for label in LABELS]


def join_sentences(sentences: list[list[str]]) -> list[str]:
    """Separator-joined concatenation of token lists."""
    joined: list[str] = []
    for i, sentence in enumerate(sentences):
        if i > 0:
            joined.append(SEP)
        joined.extend(sentence)
    return joined


def assemble_input(instance: Instance, mode: str = "plain") -> list[str]:
    """Build the model input token sequence for one instance.

    ``plain``: context sentences in story order, a separator, then the target
    sentence. ``labels_as_input`` additionally appends the eight label
    template sentences, each preceded by a separator.
    """
    if mode not in ("plain", "labels_as_input"):
        raise ValueError(f"unknown input mode '{mode}'")
    tokens = join_sentences(list(instance.context))
    tokens.append(SEP)
    tokens.extend(instance.sentence)
    if mode == "labels_as_input":
        for sentence in label_sentences(instance.character):
            tokens.append(SEP)
            tokens.extend(sentence)
    return [t.lower() for t in tokens]


@dataclass
class EncoderParams:
    """Trainable encoder tensors.

    ``embeddings`` is |V| x d; ``mix_weights`` is d x 3d and mixes the
    (previous, current, next) embedding window; ``mix_bias`` is length d.
    """

    embeddings: np.ndarray
    mix_weights: np.ndarray
    mix_bias: np.ndarray

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, dim: int) -> "EncoderParams":
        return cls(
            embeddings=uniform_init(rng, vocab_size, dim),
            mix_weights=uniform_init(rng, dim, 3 * dim),
            mix_bias=uniform_init(rng, dim),
        )


def _window_stack(embedded: np.ndarray) -> np.ndarray:
    """T x 3d matrix of [previous; current; next] embeddings, zero-padded."""
    t, d = embedded.shape
    stacked = np.zeros((t, 3 * d))
    stacked[:, d: 2 * d] = embedded
    stacked[1:, :d] = embedded[:-1]
    stacked[:-1, 2 * d:] = embedded[1:]
    return stacked


def encode_tokens(token_ids: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Per-token contextual states, shape T x d, entries in (-1, 1).

    Token ids must already be vocabulary indices (unknown tokens mapped to
    the unknown index by the caller). An empty sequence is an error.
    """
    token_ids = np.asarray(token_ids, dtype=np.intp)
    if token_ids.size == 0:
        raise ValueError("cannot encode an empty token sequence")
    embedded = params.embeddings[token_ids]
    windows = _window_stack(embedded)
    return np.tanh(windows @ params.mix_weights.T + params.mix_bias)


def encode_backward(
    token_ids: np.ndarray,
    params: EncoderParams,
    states: np.ndarray,
    d_states: np.ndarray,
    grads: Params,
) -> None:
    """Accumulate encoder gradients for one sequence into ``grads``.

    ``states`` must be the forward output for ``token_ids``; gradient keys
    are "embeddings", "mix_weights", "mix_bias".
    """
    token_ids = np.asarray(token_ids, dtype=np.intp)
    d = params.dim
    pre = d_states * (1.0 - states * states)
    windows = _window_stack(params.embeddings[token_ids])
    grads["mix_weights"] += pre.T @ windows
    grads["mix_bias"] += pre.sum(axis=0)
    d_windows = pre @ params.mix_weights
    d_embedded = d_windows[:, d: 2 * d].copy()
    d_embedded[:-1] += d_windows[1:, :d]
    d_embedded[1:] += d_windows[:-1, 2 * d:]
    np.add.at(grads["embeddings"], token_ids, d_embedded)


@dataclass
class LabelEmbeddingBank:
    """Source of the K x d label-embedding matrix.

    Static mode stores the trainable matrix directly. Dynamic mode stores the
    eight template sentences (token lists plus their vocabulary ids); their
    encodings are mean-pooled on demand, so the matrix tracks the encoder.
    """

    mode: str
    matrix: np.ndarray | None = None
    sentences: list[list[str]] | None = None
    sentence_ids: list[np.ndarray] | None = None

    @classmethod
    def static(cls, matrix: np.ndarray) -> "LabelEmbeddingBank":
        if matrix.shape[0] != len(LABELS):
            raise ValueError(f"label embedding matrix must have {len(LABELS)} rows")
        return cls(mode="static", matrix=matrix)

    @classmethod
    def dynamic(cls, character: str, vocab: Vocabulary) -> "LabelEmbeddingBank":
        sentences = label_sentences(character)
        return cls(
            mode="dynamic",
            sentences=sentences,
            sentence_ids=[vocab.encode(s) for s in sentences],
        )


def label_embeddings(bank: LabelEmbeddingBank, params: EncoderParams) -> np.ndarray:
    """K x d label-embedding matrix from the bank's current source."""
    if bank.mode == "static":
        return bank.matrix
    rows = [encode_tokens(ids, params).mean(axis=0) for ids in bank.sentence_ids]
    return np.stack(rows)


def label_embeddings_backward(
    bank: LabelEmbeddingBank,
    params: EncoderParams,
    d_matrix: np.ndarray,
    grads: Params,
) -> None:
    """Route label-embedding gradients back to their source tensors."""
    if bank.mode == "static":
        grads["label_emb"] += d_matrix
        return
    for ids, d_row in zip(bank.sentence_ids, d_matrix):
        states = encode_tokens(ids, params)
        d_states = np.tile(d_row / len(ids), (len(ids), 1))
        encode_backward(ids, params, states, d_states, grads)
