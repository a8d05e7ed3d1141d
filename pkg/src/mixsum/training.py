"""Loss, exact gradients, rectified-Adam optimization and the training loop.

The learning-rate schedule ramps linearly from init_lr to peak_lr across the
warmup window and then decays exponentially per step. The optimizer follows
the rectified update law: with moment decay rates b1, b2 and step t,

    rho_inf = 2 / (1 - b2) - 1
    rho_t   = rho_inf - 2 t b2^t / (1 - b2^t)

and when rho_t > 4 the step is  lr * r_t * m_hat / (sqrt(v_hat) + eps)  with

    r_t = sqrt( (rho_t - 4)(rho_t - 2) rho_inf
              / ((rho_inf - 4)(rho_inf - 2) rho_t) ),

otherwise the variance term is considered untrustworthy and the update is
plain lr * m_hat. All arithmetic is float64 so that gradient checks against
central finite differences hold to tight tolerances.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .model import ModelParams, build_param_tensors, forward_graph, param_shapes
from .objectives import TrainingExample, control_prefix
from .vocab import SpecialTokens


@dataclass(frozen=True)
class ScheduleConfig:
    init_lr: float
    peak_lr: float
    warmup_steps: int
    decay_rate: float

    def __post_init__(self):
        if not 0 < self.init_lr <= self.peak_lr:
            raise ValueError("need 0 < init_lr <= peak_lr")
        if self.warmup_steps <= 0:
            raise ValueError("warmup_steps must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must lie in (0, 1]")


def pretrain_schedule(warmup_steps: int = 16_000,
                      decay_rate: float = 0.9999) -> ScheduleConfig:
    return ScheduleConfig(1e-9, 1e-3, warmup_steps, decay_rate)


def finetune_schedule(warmup_steps: int = 500,
                      decay_rate: float = 0.9999) -> ScheduleConfig:
    return ScheduleConfig(1e-4, 1e-3, warmup_steps, decay_rate)


def lr_at(schedule: ScheduleConfig, step: int) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    if step <= schedule.warmup_steps:
        frac = step / schedule.warmup_steps
        return schedule.init_lr + (schedule.peak_lr - schedule.init_lr) * frac
    return schedule.peak_lr * schedule.decay_rate ** (step - schedule.warmup_steps)


# -- loss ----------------------------------------------------------------------

def loss(logits: np.ndarray, tgt_ids: np.ndarray, pad_id: int) -> tuple[float, int]:
    """Mean token negative log-likelihood over non-pad target positions."""
    mask = tgt_ids != pad_id
    value, count = ad.cross_entropy(ad.Tensor(np.asarray(logits, dtype=np.float64)),
                                    tgt_ids, mask)
    return float(value.data), count


# -- batching --------------------------------------------------------------------

@dataclass(frozen=True)
class BatchSpec:
    max_tokens: int = 1024
    max_examples: int = 32


@dataclass
class Batch:
    src: np.ndarray
    dec_in: np.ndarray
    labels: np.ndarray
    task_counts: dict[str, int]


def assemble_batch(examples: Sequence[TrainingExample], sp: SpecialTokens) -> Batch:
    """Pad examples into arrays. Decoder input rows are
    [task, lang, bos, target...]; label rows are [pad, pad, target..., eos],
    so the two control positions never contribute loss and the final real
    position predicts eos."""
    if not examples:
        raise ValueError("cannot assemble an empty batch")
    names = {v: k for k, v in sp.task_ids.items()}
    src_len = max(len(e.src_ids) for e in examples)
    dec_len = max(len(e.tgt_ids) for e in examples) + 3
    bsz = len(examples)
    src = np.full((bsz, src_len), sp.pad_id, dtype=np.int64)
    dec_in = np.full((bsz, dec_len), sp.pad_id, dtype=np.int64)
    labels = np.full((bsz, dec_len), sp.pad_id, dtype=np.int64)
    counts: dict[str, int] = {}
    for i, e in enumerate(examples):
        src[i, : len(e.src_ids)] = e.src_ids
        row = control_prefix(e.task, e.tgt_lang, sp) + [sp.bos_id] + list(e.tgt_ids)
        dec_in[i, : len(row)] = row
        labels[i, 2: 3 + len(e.tgt_ids)] = list(e.tgt_ids) + [sp.eos_id]
        counts[names[e.task]] = counts.get(names[e.task], 0) + 1
    return Batch(src, dec_in, labels, counts)


def take_batch(stream: Iterator[TrainingExample], spec: BatchSpec,
               sp: SpecialTokens) -> Batch:
    """Pull examples until the token budget or example cap is hit."""
    examples: list[TrainingExample] = []
    tokens = 0
    while len(examples) < spec.max_examples:
        ex = next(stream)
        cost = len(ex.src_ids) + len(ex.tgt_ids) + 3
        if examples and tokens + cost > spec.max_tokens:
            break
        examples.append(ex)
        tokens += cost
        if tokens >= spec.max_tokens:
            break
    return assemble_batch(examples, sp)


# -- gradients --------------------------------------------------------------------

def backward(params: ModelParams, batch: Batch, sp: SpecialTokens,
             train_mode: bool = False,
             rng: np.random.Generator | None = None) -> tuple[float, int, dict]:
    """Exact gradient of the mean batch loss for every parameter tensor."""
    pt = build_param_tensors(params, requires_grad=True)
    logits = forward_graph(pt, params.config, batch.src, batch.dec_in,
                           pad_id=sp.pad_id, train_mode=train_mode, rng=rng)
    mask = batch.labels != sp.pad_id
    value, count = ad.cross_entropy(logits, batch.labels, mask)
    value.backward()
    grads = {}
    for name in param_shapes(params.config):
        g = pt[name].grad
        grads[name] = g if g is not None else np.zeros_like(params.tensors[name])
    return float(value.data), count, grads


# -- optimizer ---------------------------------------------------------------------

@dataclass
class OptimizerState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.step < 0:
            raise ValueError("step must be >= 0")

    @classmethod
    def fresh(cls, params: ModelParams, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "OptimizerState":
        return cls(0,
                   {k: np.zeros_like(t) for k, t in params.tensors.items()},
                   {k: np.zeros_like(t) for k, t in params.tensors.items()},
                   beta1, beta2, eps)


def variance_rho(beta2: float, t: int) -> float:
    """The rectification statistic rho_t; the adaptive branch needs rho_t > 4."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    b2t = beta2 ** t
    return rho_inf - 2.0 * t * b2t / (1.0 - b2t)


def radam_step(params: ModelParams, grads: dict[str, np.ndarray],
               state: OptimizerState, lr: float) -> tuple[ModelParams, OptimizerState]:
    """One in-place rectified-Adam update; see the module docstring for the
    exact law. A non-finite gradient raises before any state changes."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
    b1, b2 = state.beta1, state.beta2
    t = state.step + 1
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    rho = variance_rho(b2, t)
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    rectified = rho > 4.0
    if rectified:
        r = np.sqrt((rho - 4.0) * (rho - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        if rectified:
            v_hat = np.sqrt(v / bias2)
            params.tensors[name] -= lr * r * m_hat / (v_hat + state.eps)
        else:
            params.tensors[name] -= lr * m_hat
    state.step = t
    return params, state


# -- the loop -----------------------------------------------------------------------

def run_training(params: ModelParams, stream: Iterator[TrainingExample],
                 schedule: ScheduleConfig, steps: int, batch_spec: BatchSpec,
                 rng: np.random.Generator, sp: SpecialTokens,
                 state: OptimizerState | None = None,
                 metrics_path=None) -> tuple[ModelParams, OptimizerState, list[dict]]:
    """Drive `steps` optimizer updates over a mixed example stream.

    Metrics records carry (step, per-task example counts, loss, lr,
    wall_time); everything except wall_time is a pure function of the
    inputs. Failures re-raise with the step index attached.
    """
    if state is None:
        state = OptimizerState.fresh(params)
    metrics: list[dict] = []
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for i in range(steps):
            try:
                batch = take_batch(stream, batch_spec, sp)
                lr = lr_at(schedule, state.step)
                value, count, grads = backward(params, batch, sp,
                                               train_mode=True, rng=rng)
                radam_step(params, grads, state, lr)
            except Exception as exc:
                raise RuntimeError(f"training failed at step {i}") from exc
            record = {"step": state.step, "loss": value, "lr": lr,
                      "tokens": count, "tasks": batch.task_counts,
                      "wall_time": time.time()}
            metrics.append(record)
            if sink:
                sink.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if sink:
            sink.close()
    return params, state, metrics
