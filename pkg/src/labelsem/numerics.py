"""Dense float64 math plumbing shared by every trainable component.

Everything here is deliberately small: parameters are plain numpy arrays in
name-keyed dicts, the optimizer is a hand-rolled adaptive-moment rule (plain
gradient descent available as a fallback), and the gradient checker compares
hand-derived gradients against central finite differences. All arithmetic is
64-bit; at this scale numerical headroom beats speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Params = dict[str, np.ndarray]

# Relative-error denominator floor: keeps the ratio meaningful when both
# gradients are near zero (finite-difference noise is ~1e-11 at eps=1e-5).
_REL_ERROR_FLOOR = 1e-6


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seed gives identical draws on any platform."""
    return np.random.default_rng(seed)


def uniform_init(rng: np.random.Generator, *shape: int, scale: float = 0.08) -> np.ndarray:
    """Uniform init in [-scale, scale], the default for all trainable tensors."""
    return rng.uniform(-scale, scale, size=shape)


def check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"non-finite values in tensor '{name}'")
    return array


@dataclass
class OptimizerState:
    """Per-run optimizer state.

    ``algo`` is "adam" (adaptive moments with bias correction, the default)
    or "sgd" (plain gradient descent). Moment accumulators are allocated
    lazily, keyed by parameter name, and always shape-match the parameters.
    """

    step_size: float = 0.01
    algo: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)


def optimizer_step(params: Params, grads: Params, state: OptimizerState) -> Params:
    """Apply one in-place update to every parameter present in ``grads``.

    Raises ValueError on any shape mismatch between a parameter and its
    gradient; raises FloatingPointError if an update would introduce
    non-finite values.
    """
    for name, grad in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter '{name}'")
        if params[name].shape != grad.shape:
            raise ValueError(
                f"shape mismatch for '{name}': parameter {params[name].shape} "
                f"vs gradient {grad.shape}"
            )
    state.step += 1
    for name, grad in grads.items():
        p = params[name]
        if state.algo == "sgd":
            p -= state.step_size * grad
        elif state.algo == "adam":
            m = state.first_moment.setdefault(name, np.zeros_like(p))
            v = state.second_moment.setdefault(name, np.zeros_like(p))
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            m_hat = m / (1.0 - state.beta1 ** state.step)
            v_hat = v / (1.0 - state.beta2 ** state.step)
            p -= state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)
        else:
            raise ValueError(f"unknown optimizer algo '{state.algo}'")
        check_finite(name, p)
    return params


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    passed: bool
    note: str = ""

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status}  {self.name:<16} max_rel_error={self.max_rel_error:.3e}"
        return line + (f"  ({self.note})" if self.note else "")


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    epsilon: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if not e.passed]

    def __str__(self) -> str:
        return "\n".join(e.format() for e in self.entries)


LossAndGrads = Callable[[Params], tuple[float, Params]]


def grad_check(
    loss_and_grads: LossAndGrads,
    point: Params,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare hand-derived gradients with central finite differences.

    ``loss_and_grads`` maps a parameter dict to (loss, gradient dict); the
    analytic gradients are taken once at ``point`` and each coordinate is then
    probed at ``point +/- epsilon``. Per entry, the relative error is
    |g_analytic - g_numeric| / max(|g_analytic| + |g_numeric|, floor); each
    tensor reports its worst entry. A non-finite loss at any probe point fails
    that tensor outright with the cause recorded.
    """
    if not (0.0 < epsilon <= 1e-3):
        raise ValueError("epsilon must lie in (0, 1e-3]")
    probe = {name: np.array(value, dtype=float, copy=True) for name, value in point.items()}
    loss0, analytic = loss_and_grads(probe)
    if not np.isfinite(loss0):
        raise FloatingPointError("loss is non-finite at the evaluation point")

    entries = []
    for name in probe:
        grad = np.asarray(analytic[name], dtype=float)
        if grad.shape != probe[name].shape:
            entries.append(GradCheckEntry(name, np.inf, False, "analytic gradient shape mismatch"))
            continue
        if not np.all(np.isfinite(grad)):
            entries.append(GradCheckEntry(name, np.inf, False, "non-finite analytic gradient"))
            continue
        worst = 0.0
        note = ""
        ok = True
        tensor = probe[name]
        flat = tensor.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            loss_plus = loss_and_grads(probe)[0]
            flat[i] = original - epsilon
            loss_minus = loss_and_grads(probe)[0]
            flat[i] = original
            if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
                ok = False
                worst = np.inf
                note = f"non-finite loss at probe index {i}"
                break
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            ga = grad.reshape(-1)[i]
            rel = abs(ga - numeric) / max(abs(ga) + abs(numeric), _REL_ERROR_FLOOR)
            worst = max(worst, rel)
        if ok:
            ok = worst < tolerance
        entries.append(GradCheckEntry(name, worst, ok, note))
    return GradCheckReport(entries, epsilon=epsilon, tolerance=tolerance)
