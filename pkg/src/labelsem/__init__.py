"""labelsem: multi-label emotion classification with label semantics.

The pieces: a window-3 token encoder over trainable embeddings, label
embeddings attending over the token states, a learned label-correlation
matrix coupling the logits at inference and relaxing the targets during
training, and a correlation-consistency regularizer that learns from
unlabeled text. Everything is float64 numpy with hand-derived gradients,
verified by finite differences.
"""

from .attention import AttentionResult, attend, compatibility
from .correlation import (
    PredictionRecord,
    bce,
    correlate_logits,
    pair_distance,
    reg_loss,
    soft_targets,
    total_loss,
)
from .data import (
    LABELS,
    NUM_LABELS,
    DataError,
    LabeledInstance,
    SyntheticSpec,
    UnlabeledInstance,
    Vocabulary,
    WordVectorTable,
    corr_from_pairs,
    gen_synthetic,
    load_instances,
    load_word_vectors,
    save_instances,
)
from .encoder import (
    EncoderParams,
    LabelEmbeddingBank,
    assemble_input,
    encode_tokens,
    label_embeddings,
)
from .evaluation import (
    MetricReport,
    SignificanceResult,
    empirical_correlations,
    micro_prf,
    randomization_test,
    threshold_sweep,
)
from .model import ArtifactError, Model, ModelConfig, VariantError
from .numerics import OptimizerState, GradCheckReport, grad_check, optimizer_step, seeded_rng
from .training import semi_supervised_epoch, supervised_step, train

__version__ = "0.1.0"
