"""Training loops: batch construction, the supervised step, the alternating
semi-supervised epoch, and the top-level seeded run.

The semi-supervised schedule alternates per batch pair: a supervised step
updates every trainable tensor on a labeled batch, then the correlation
matrix alone takes a plain gradient step on the score-consistency
regularizer evaluated on an unlabeled batch. Unlabeled batches cycle when
the pool is smaller than the labeled one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import cycle

import numpy as np

from . import correlation
from .data import LabeledInstance, UnlabeledInstance, WordVectorTable
from .evaluation import micro_prf
from .model import Model, ModelConfig
from .numerics import OptimizerState, optimizer_step, seeded_rng


def make_batches(items: list, batch_size: int) -> list[list]:
    return [items[i: i + batch_size] for i in range(0, len(items), batch_size)]


def new_optimizer(config: ModelConfig) -> OptimizerState:
    return OptimizerState(step_size=config.step_size, algo=config.optimizer)


def supervised_step(
    batch: list[LabeledInstance], model: Model, state: OptimizerState
) -> float:
    """One forward/backward pass and optimizer update on a labeled batch.

    Returns the batch-mean loss. All trainable tensors move; the correlation
    diagonal is re-clamped after the update.
    """
    loss, grads = model.loss_and_grads(batch)
    trainable = {name: grads[name] for name in model.trainable_names()}
    optimizer_step(model.params, trainable, state)
    if model.has_correlation:
        correlation.clamp_diagonal(model.params["corr"])
    return loss


def regularizer_step(
    batch: list[UnlabeledInstance], model: Model
) -> float:
    """Update the correlation matrix alone on one unlabeled batch.

    Plain gradient descent at ``corr_step_scale`` times the main step size;
    every other tensor is untouched by construction. Returns the regularizer
    loss before the update.
    """
    logits = model.batch_logits(batch)
    loss, _, d_corr = correlation.reg_loss_grads(logits, model.params["corr"])
    if not model.config.freeze_corr:
        model.params["corr"] -= model.config.corr_step_scale * model.config.step_size * d_corr
        correlation.clamp_diagonal(model.params["corr"])
    return loss


def semi_supervised_epoch(
    labeled_batches: list[list[LabeledInstance]],
    unlabeled_batches: list[list[UnlabeledInstance]],
    model: Model,
    state: OptimizerState,
) -> Model:
    """One alternating epoch: per labeled batch, a supervised step followed by
    ``semi_ratio`` correlation-only regularizer steps on unlabeled batches."""
    if not unlabeled_batches or not any(unlabeled_batches):
        raise ValueError("semi-supervised variant requires unlabeled data")
    unlabeled_cycle = cycle(unlabeled_batches)
    for batch in labeled_batches:
        supervised_step(batch, model, state)
        for _ in range(model.config.semi_ratio):
            regularizer_step(next(unlabeled_cycle), model)
    return model


@dataclass
class TrainHistory:
    """Per-epoch diagnostics collected by :func:`train`."""

    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        columns = list(self.rows[0])
        lines = [",".join(columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row.get(c)) for c in columns))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def evaluate_model(model: Model, instances: list[LabeledInstance],
                   threshold: float | None = None):
    cut = model.config.threshold if threshold is None else threshold
    gold = [i.labels for i in instances]
    pred = [(model.predict_scores(i) >= cut).astype(int) for i in instances]
    return micro_prf(gold, pred)


def train(
    config: ModelConfig,
    train_instances: list[LabeledInstance],
    dev_instances: list[LabeledInstance] | None = None,
    unlabeled_instances: list[UnlabeledInstance] | None = None,
    word_vectors: WordVectorTable | None = None,
    log=None,
) -> tuple[Model, TrainHistory]:
    """Full seeded training run.

    The run seed drives parameter init and the per-epoch shuffle, so a
    (seed, config, data) triple fully determines every parameter. With a dev
    set and ``config.patience`` set, training stops once dev F1 has not
    improved for that many epochs and the best parameters are restored.
    """
    if config.variant == "leam_corr_semi" and not unlabeled_instances:
        raise ValueError("semi-supervised variant requires unlabeled data")
    model = Model.build(config, train_instances, word_vectors=word_vectors)
    state = new_optimizer(config)
    shuffle_rng = seeded_rng(config.seed)
    history = TrainHistory()
    best_f1, best_params, stale = -1.0, None, 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_instances))
        shuffled = [train_instances[i] for i in order]
        labeled_batches = make_batches(shuffled, config.batch_size)
        if config.variant == "leam_corr_semi":
            unlabeled_batches = make_batches(list(unlabeled_instances), config.batch_size)
            epoch_losses = []
            unlabeled_cycle = cycle(unlabeled_batches)
            for batch in labeled_batches:
                epoch_losses.append(supervised_step(batch, model, state))
                for _ in range(config.semi_ratio):
                    regularizer_step(next(unlabeled_cycle), model)
        else:
            epoch_losses = [supervised_step(batch, model, state) for batch in labeled_batches]
        mean_loss = float(np.mean(epoch_losses))

        dev_f1 = None
        if dev_instances:
            dev_f1 = evaluate_model(model, dev_instances).f1
        history.add(epoch=epoch, train_loss=mean_loss, dev_f1=dev_f1)
        if log:
            log(f"epoch {epoch}: train_loss={mean_loss:.4f}"
                + (f" dev_f1={dev_f1:.4f}" if dev_f1 is not None else ""))

        if dev_instances and config.patience is not None:
            if dev_f1 > best_f1:
                best_f1, stale = dev_f1, 0
                best_params = {k: v.copy() for k, v in model.params.items()}
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_params is not None:
        model.params = best_params
    return model, history
