"""Stream-level MLPF denoising.

Per event, strictly in order: read features from the TPI, run integer
inference, threshold, then write the event into the TPI.  ``denoise_stream``
does this for whole streams with a vectorized replay; ``DenoiseSession``
is the one-event-at-a-time form used for live feeds and as the reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .events import Event, EventArray, SensorGeometry, _join_columns
from .mlpf import (MlpfWeights, Threshold, classify, classify_batch, infer_batch,
                   infer_quantized, SIGNAL)
from .tpi import AgeWindow, TpiMemory, extract_features_batch, features_to_codes


@dataclass
class DenoiseConfig:
    weights: MlpfWeights
    threshold: Threshold = Threshold(0)
    tau: AgeWindow = AgeWindow(64)
    geometry: SensorGeometry = SensorGeometry()
    emit_scores: bool = True


@dataclass(frozen=True)
class Decision:
    event: Event
    predicted: str
    logit_code: int | float | None = None


class Decisions:
    """Column-wise decisions for a stream; iterating yields :class:`Decision`."""

    def __init__(self, events: EventArray, signal: np.ndarray, scores: np.ndarray | None = None):
        self.events = events
        self.signal = np.asarray(signal, dtype=bool)
        self.scores = None if scores is None else np.asarray(scores)
        if len(self.signal) != len(events):
            raise ValueError("one decision per event required")

    def __len__(self):
        return len(self.events)

    def __getitem__(self, i) -> Decision:
        score = None if self.scores is None else self.scores[i].item()
        return Decision(self.events[i], SIGNAL if self.signal[i] else "noise", score)

    def __iter__(self) -> Iterator[Decision]:
        for i in range(len(self)):
            yield self[i]

    def kept(self) -> EventArray:
        return self.events[self.signal]

    def to_csv(self) -> str:
        ev = self.events
        header = "t_us,x,y,p,pred"
        cols = [ev.t_us, ev.x, ev.y, (ev.p > 0).astype(np.int64), self.signal.astype(np.int64)]
        fmts = [None] * 5
        if self.scores is not None:
            header += ",logit"
            cols.append(self.scores)
            fmts.append(None if np.issubdtype(self.scores.dtype, np.integer) else _fmt_score)
        if ev.labeled:
            header += ",label"
            cols.append(ev.label)
            fmts.append(None)
        return _join_columns(header, cols, fmts)

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def _fmt_score(v):
    return repr(float(v))


class DenoiseSession:
    """Sequential denoiser owning one TPI."""

    def __init__(self, cfg: DenoiseConfig):
        self.cfg = cfg
        self.tpi = TpiMemory(cfg.geometry)

    def process(self, e: Event) -> Decision:
        x = self.tpi.extract_features(e, self.cfg.tau)
        logit = infer_quantized(self.cfg.weights, x)
        pred = classify(logit, self.cfg.threshold)
        self.tpi.update(e)
        return Decision(e, pred, logit.code if self.cfg.emit_scores else None)


def logits_for_stream(events: EventArray, weights: MlpfWeights, tau: AgeWindow,
                      geometry: SensorGeometry) -> np.ndarray:
    ages, pols = extract_features_batch(events, geometry, tau)
    return logits_for_features(weights, ages, pols)


def logits_for_features(weights: MlpfWeights, ages: np.ndarray, pols: np.ndarray,
                        chunk: int = 65536) -> np.ndarray:
    """Integer logits for int8 feature blocks, converted chunk by chunk."""
    out = np.empty(len(ages), dtype=np.int64)
    fmt = weights.formats.input
    for s in range(0, len(ages), chunk):
        codes = features_to_codes(ages[s:s + chunk], pols[s:s + chunk], fmt)
        out[s:s + chunk] = infer_batch(weights, codes)
    return out


def denoise_stream(events: EventArray, cfg: DenoiseConfig) -> Decisions:
    events.validate(cfg.geometry)
    codes = logits_for_stream(events, cfg.weights, cfg.tau, cfg.geometry)
    return Decisions(events, classify_batch(codes, cfg.threshold),
                     codes if cfg.emit_scores else None)
