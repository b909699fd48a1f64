"""AdamW optimizer and the linear warm-up / linear decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import adamw_update
from .tensor import NumericFault, Tensor


@dataclass
class AdamWState:
    """Per-parameter first/second moment buffers plus a step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adamw_step(params: list[Tensor], state: AdamWState, lr: float) -> None:
    """One decoupled-weight-decay Adam update over `params` in place.

    Parameters without a gradient are skipped. A NaN gradient aborts the
    whole step (no parameter is touched) and raises NumericFault.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericFault("NaN/Inf gradient; step aborted")
    state.step += 1
    for i, p in enumerate(params):
        if p.grad is None:
            continue
        if i not in state.m:
            state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        adamw_update(
            p.data,
            p.grad,
            state.m[i],
            state.v[i],
            state.step,
            lr,
            state.beta1,
            state.beta2,
            state.eps,
            state.weight_decay,
        )


class AdamW:
    """Convenience wrapper binding a parameter list to an AdamWState."""

    def __init__(self, params: list[Tensor], weight_decay: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamWState(beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class LrSchedule:
    """Linear warm-up to peak_lr, then linear decay to 0 at max_steps."""

    peak_lr: float
    max_steps: int
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.warmup_fraction <= 1.0):
            raise ValueError("warmup_fraction must be in [0,1]")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if not (0 <= step <= schedule.max_steps):
        raise ValueError(f"step {step} outside [0, {schedule.max_steps}]")
    warm = schedule.warmup_fraction * schedule.max_steps
    if warm > 0 and step < warm:
        return schedule.peak_lr * step / warm
    if schedule.max_steps == warm:
        return schedule.peak_lr if step < warm else 0.0
    return schedule.peak_lr * (schedule.max_steps - step) / (schedule.max_steps - warm)
