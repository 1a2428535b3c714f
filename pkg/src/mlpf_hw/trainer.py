"""Quantization-aware training of the 98-10-1 MLPF.

Forward: the input, both weight tensors, both biases and the hidden
activations go through the same quantizers the integer engine uses, so
exported codes reproduce the training-time logits exactly.  Backward:
straight-through, with the gradient zeroed wherever a quantizer clips.
Loss is binary cross-entropy on sigmoid(logit) plus optional L1 on the
weights; the optimizer is SGD with momentum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .evaluation import auc_score
from .events import EventArray, SensorGeometry, NO_LABEL
from .mlpf import FloatWeights, MlpfFormats, MlpfWeights, N_HIDDEN, float_logit, sigmoid
from .qarith import quantize_codes
from .tpi import AgeWindow, N_INPUTS, extract_features_batch, features_to_real

log = logging.getLogger(__name__)

PARAMS = ("w1", "b1", "w2", "b2")


class TrainingError(ValueError):
    pass


@dataclass
class TrainingSamples:
    ages: np.ndarray        # (n, 49) int8 age codes
    polarities: np.ndarray  # (n, 49) int8 signs
    labels: np.ndarray      # (n,) 1 = signal

    def __len__(self):
        return len(self.labels)

    def inputs(self, idx=None) -> np.ndarray:
        if idx is None:
            return features_to_real(self.ages, self.polarities)
        return features_to_real(self.ages[idx], self.polarities[idx])

    def subset(self, idx) -> "TrainingSamples":
        return TrainingSamples(self.ages[idx], self.polarities[idx], self.labels[idx])


def build_dataset(events: EventArray, tau: AgeWindow = AgeWindow(64),
                  geometry: SensorGeometry = SensorGeometry()) -> TrainingSamples:
    """One (features, label) sample per event of a labeled stream.

    Every event, signal or noise, is written into the TPI, exactly as the
    denoiser replays it.
    """
    if not events.labeled or (len(events) and (events.label == NO_LABEL).any()):
        raise TrainingError("training needs a fully labeled stream")
    ages, pols = extract_features_batch(events, geometry, tau)
    return TrainingSamples(ages, pols, events.label.astype(np.int8).copy())


@dataclass
class TrainConfig:
    bits: int | None = 4          # None trains the float network
    lr: float = 0.05
    momentum: float = 0.9
    lr_decay: float = 0.3         # lr / (1 + lr_decay * epoch)
    batch_size: int = 256
    epochs: int = 20
    steps_per_epoch: int | None = 150
    signal_fraction: float = 0.5  # expected share of signal samples per batch
    l1: float = 1e-5
    init_scale: float = 1.0       # multiplier on Glorot-uniform limits
    ema: float | None = 0.999     # per-step weight averaging; None exports the raw iterate
    eval_size: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.bits is not None and self.bits < 2:
            raise ValueError("bit width must be >= 2")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.signal_fraction < 1:
            raise ValueError("signal_fraction must be in (0, 1)")
        if self.ema is not None and not 0 <= self.ema < 1:
            raise ValueError("ema must be in [0, 1)")

    @property
    def formats(self) -> MlpfFormats | None:
        return None if self.bits is None else MlpfFormats(self.bits)


@dataclass
class TrainResult:
    weights: MlpfWeights | None   # integer codes (None for float training)
    shadow: FloatWeights
    history: list = field(default_factory=list)   # (epoch, loss, auc)

    def history_csv(self) -> str:
        rows = ["epoch,loss,auc"] + [f"{e},{l:.6f},{a:.6f}" for e, l, a in self.history]
        return "\n".join(rows) + "\n"


def init_params(rng, init_scale=1.0) -> dict:
    lim1 = init_scale * np.sqrt(6.0 / (N_INPUTS + N_HIDDEN))
    lim2 = init_scale * np.sqrt(6.0 / (N_HIDDEN + 1))
    return {"w1": rng.uniform(-lim1, lim1, (N_INPUTS, N_HIDDEN)),
            "b1": np.zeros(N_HIDDEN),
            "w2": rng.uniform(-lim2, lim2, N_HIDDEN) * 0.5,
            "b2": np.zeros(())}


def _quant(a, fmt):
    return quantize_codes(a, fmt) / fmt.scale


def _in_range(a, fmt):
    return (a >= fmt.min_value) & (a <= fmt.max_value)


def forward(params: dict, x: np.ndarray, formats: MlpfFormats | None):
    """Logits plus the intermediates backward needs."""
    if formats is None:
        z = x @ params["w1"] + params["b1"]
        h = np.maximum(z, 0.0)
        logit = h @ params["w2"] + params["b2"]
        return logit, {"x": x, "z": z, "h": h}
    wf, acc = formats.weight, formats.acc
    q = {k: _quant(params[k], wf) for k in PARAMS}
    xq = _quant(x, formats.input)
    z = np.clip(xq @ q["w1"] + q["b1"], acc.min_value, acc.max_value)
    hf = formats.hidden
    h = _quant(np.maximum(z, 0.0), hf)
    pre = h @ q["w2"] + q["b2"]
    logit = np.clip(pre, acc.min_value, acc.max_value)
    return logit, {"x": xq, "z": z, "h": h, "q": q, "pre": pre}


def bce(logit, y):
    # log(1 + exp(-|l|)) form, stable for large |logit|
    return float(np.mean(np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))))


def l1_penalty(params: dict, l1: float) -> float:
    return l1 * float(np.abs(params["w1"]).sum() + np.abs(params["w2"]).sum())


def loss_and_grad(params: dict, x: np.ndarray, y: np.ndarray,
                  formats: MlpfFormats | None, l1: float = 0.0):
    logit, c = forward(params, x, formats)
    loss = bce(logit, y) + l1_penalty(params, l1)
    g = (sigmoid(logit) - y) / len(y)
    if formats is None:
        w2 = params["w2"]
        dz = np.outer(g, w2) * (c["z"] > 0)
    else:
        acc, hf = formats.acc, formats.hidden
        g = g * ((c["pre"] >= acc.min_value) & (c["pre"] <= acc.max_value))
        w2 = c["q"]["w2"]
        z = c["z"]
        dz = np.outer(g, w2) * ((z > 0) & (z < hf.max_value))
    grads = {"w1": c["x"].T @ dz, "b1": dz.sum(axis=0),
             "w2": c["h"].T @ g, "b2": np.asarray(g.sum())}
    if formats is not None:
        wf = formats.weight
        for k in PARAMS:
            grads[k] = grads[k] * _in_range(params[k], wf)
    if l1:
        grads["w1"] = grads["w1"] + l1 * np.sign(params["w1"])
        grads["w2"] = grads["w2"] + l1 * np.sign(params["w2"])
    return loss, grads


def _to_float_weights(params) -> FloatWeights:
    return FloatWeights(params["w1"].copy(), params["b1"].copy(), params["w2"].copy(),
                        float(params["b2"]))


def _steps_per_epoch(labels, cfg: TrainConfig) -> int:
    smaller = min(np.count_nonzero(labels == 1), np.count_nonzero(labels == 0))
    steps = int(np.ceil(2 * smaller / cfg.batch_size))
    return steps if cfg.steps_per_epoch is None else min(steps, cfg.steps_per_epoch)


def _balanced_batches(labels, cfg: TrainConfig, rng):
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    n_pos = max(1, int(round(cfg.batch_size * cfg.signal_fraction)))
    n_neg = cfg.batch_size - n_pos
    steps = _steps_per_epoch(labels, cfg)
    pos_draw = rng.choice(pos, size=steps * n_pos, replace=len(pos) < steps * n_pos)
    neg_draw = rng.choice(neg, size=steps * n_neg, replace=len(neg) < steps * n_neg)
    for s in range(steps):
        yield np.concatenate([pos_draw[s * n_pos:(s + 1) * n_pos], neg_draw[s * n_neg:(s + 1) * n_neg]])


def train(samples: TrainingSamples, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    labels = samples.labels
    if len(samples) == 0 or labels.min() == labels.max():
        raise TrainingError("training needs samples of both classes")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(rng, cfg.init_scale)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    # gradients are taken at the raw iterate; monitoring and export use the
    # bias-corrected running average, which keeps quantized codes from
    # flickering once the loss has flattened out
    ema_sum = {k: np.zeros_like(v) for k, v in params.items()}
    formats = cfg.formats

    # fixed, class-balanced monitoring subset
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    k = min(cfg.eval_size // 2, len(pos), len(neg))
    eval_idx = np.sort(np.concatenate([rng.choice(pos, k, replace=False),
                                       rng.choice(neg, k, replace=False)]))
    x_eval, y_eval = samples.inputs(eval_idx), labels[eval_idx].astype(np.float64)

    history = []
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr / (1.0 + cfg.lr_decay * epoch)
        for idx in _balanced_batches(labels, cfg, rng):
            idx = np.sort(idx)
            _, grads = loss_and_grad(params, samples.inputs(idx), labels[idx].astype(np.float64),
                                     formats, cfg.l1)
            step += 1
            for name in PARAMS:
                velocity[name] = cfg.momentum * velocity[name] - lr * grads[name]
                params[name] = params[name] + velocity[name]
                if cfg.ema is not None:
                    ema_sum[name] = cfg.ema * ema_sum[name] + (1 - cfg.ema) * params[name]
        avg = params if cfg.ema is None else \
            {k: v / (1 - cfg.ema ** step) for k, v in ema_sum.items()}
        logit, _ = forward(avg, x_eval, formats)
        loss = bce(logit, y_eval) + l1_penalty(avg, cfg.l1)
        history.append((epoch, loss, auc_score(logit, y_eval)))
        log.info("epoch %d loss %.4f auc %.4f", *history[-1])

    shadow = _to_float_weights(avg)
    weights = None if cfg.bits is None else shadow.quantized(cfg.bits)
    return TrainResult(weights, shadow, history)


def quantized_forward_logits(shadow: FloatWeights, x_real: np.ndarray, bits: int) -> np.ndarray:
    """Trainer-side quantized logits (real values) for given inputs."""
    params = {"w1": shadow.w1, "b1": shadow.b1, "w2": shadow.w2, "b2": np.asarray(shadow.b2)}
    logit, _ = forward(params, np.asarray(x_real, dtype=np.float64), MlpfFormats(bits))
    return logit


def float_logits(shadow: FloatWeights, samples: TrainingSamples, chunk: int = 65536) -> np.ndarray:
    """Float-network logits for every sample, evaluated in chunks."""
    out = np.empty(len(samples))
    for s in range(0, len(samples), chunk):
        out[s:s + chunk] = float_logit(shadow, samples.inputs(slice(s, s + chunk)))
    return out
