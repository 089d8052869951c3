"""Decoupled-weight-decay Adam and cosine annealing with warm restarts.

The learning-rate schedule traces eta_min + 0.5*(eta0-eta_min)*(1+cos(pi
t/T)) within each cycle; the first cycle lasts `cycle_epochs` epochs and
every restart doubles the cycle length.  Decay is decoupled from the
moment update and skipped for parameters flagged `decay=False` (biases,
norm scalars).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphError
from .tensor import Parameter


@dataclass
class OptimHyper:
    eta0: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-2
    eta_min: float = 0.0
    cycle_epochs: int = 64
    clip_norm: float | None = None

    def validate(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.eta0 <= 0:
            raise ConfigError("eta0 must be positive")
        if self.cycle_epochs < 1:
            raise ConfigError("cycle_epochs must be >= 1")
        return self


def cycle_at(epoch: float, first_cycle: int = 64):
    """(cycle index, epochs into the cycle, cycle length) at a fractional epoch."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    length = float(first_cycle)
    t = float(epoch)
    index = 0
    while t >= length:
        t -= length
        length *= 2.0
        index += 1
    return index, t, length


@dataclass
class SchedulerState:
    """Annealing phase at some fractional epoch (derivable, so it is
    reconstructed rather than checkpointed)."""

    cycle_index: int
    cycle_length_epochs: float
    epoch_in_cycle: float

    @classmethod
    def at(cls, epoch: float, first_cycle: int = 64) -> "SchedulerState":
        index, t, length = cycle_at(epoch, first_cycle)
        return cls(cycle_index=index, cycle_length_epochs=length, epoch_in_cycle=t)


def lr_at(epoch: float, hyper: OptimHyper) -> float:
    """Cosine-annealed learning rate with doubling warm restarts."""
    _, t, length = cycle_at(epoch, hyper.cycle_epochs)
    return hyper.eta_min + 0.5 * (hyper.eta0 - hyper.eta_min) * (
        1.0 + math.cos(math.pi * t / length)
    )


def cycle_boundaries(max_epoch: int, first_cycle: int = 64) -> list[int]:
    """Epoch indices at which a cycle ends within [1, max_epoch]."""
    bounds = []
    edge, length = first_cycle, first_cycle
    while edge <= max_epoch:
        bounds.append(edge)
        length *= 2
        edge += length
    return bounds


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        g = p.grad
        if g is not None:
            total += float(np.sum(g.astype(np.float64) ** 2))
    return math.sqrt(total)


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm."""
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0:
        factor = np.float32(max_norm / norm)
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


class AdamW:
    """Adam with bias correction and decoupled weight decay.

    theta <- theta - lr * mhat/(sqrt(vhat) + eps) - lr * wd * theta, with
    the decay term omitted for `decay=False` parameters.  Gradients are
    left untouched; the caller zeroes them.
    """

    def __init__(self, params: list[Parameter], hyper: OptimHyper):
        self.params = list(params)
        self.hyper = hyper.validate()
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float):
        h = self.hyper
        self.t += 1
        bc1 = 1.0 - h.beta1**self.t
        bc2 = 1.0 - h.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise GraphError(
                    f"parameter {p.name or i} has no gradient; run backward() first"
                )
            g = g.astype(p.data.dtype, copy=False)
            self.m[i] = h.beta1 * self.m[i] + (1.0 - h.beta1) * g
            self.v[i] = h.beta2 * self.v[i] + (1.0 - h.beta2) * (g * g)
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            update = lr * mhat / (np.sqrt(vhat) + h.adam_eps)
            if p.decay and h.weight_decay != 0.0:
                update = update + (lr * h.weight_decay) * p.data
            p.data = (p.data - update).astype(p.data.dtype)

    # -- checkpoint support ----------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"state/adam/t": np.asarray([float(self.t)], dtype=np.float32)}
        for p, m, v in zip(self.params, self.m, self.v):
            if not p.name:
                raise ConfigError("optimizer checkpointing requires named parameters")
            out[f"state/adam/m/{p.name}"] = m.astype(np.float32)
            out[f"state/adam/v/{p.name}"] = v.astype(np.float32)
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        self.t = int(round(float(np.asarray(state["state/adam/t"]).reshape(-1)[0])))
        for i, p in enumerate(self.params):
            self.m[i] = np.asarray(state[f"state/adam/m/{p.name}"], dtype=p.data.dtype)
            self.v[i] = np.asarray(state[f"state/adam/v/{p.name}"], dtype=p.data.dtype)
