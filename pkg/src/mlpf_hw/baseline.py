"""Background activity filter (BAF) baseline.

An event passes iff some pixel in its (2r+1)^2 - 1 neighborhood (own pixel
excluded) fired within ``tau_us`` before it.  The per-pixel memory is
written after the check, polarity is ignored.  The emitted score is
``-min_dt`` (``-inf`` without any prior neighbor), so sweeping a threshold
over scores sweeps the correlation window.
"""

from dataclasses import dataclass

import numpy as np

from .denoiser import Decision, Decisions
from .events import Event, EventArray, SensorGeometry
from .tpi import PixelHistory


@dataclass(frozen=True)
class BafConfig:
    tau_us: int = 1000
    radius: int = 1
    geometry: SensorGeometry = SensorGeometry()

    def __post_init__(self):
        if self.tau_us <= 0:
            raise ValueError("correlation window must be positive")
        if self.radius < 1:
            raise ValueError("neighborhood radius must be >= 1")

    def offsets(self):
        r = self.radius
        return [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx or dy]


def neighbor_dt(events: EventArray, cfg: BafConfig) -> np.ndarray:
    """Time since the most recent earlier neighbor event, in us (inf if none)."""
    n = len(events)
    best = np.full(n, np.inf)
    if n == 0:
        return best
    history = PixelHistory(events, cfg.geometry)
    t = events.t_us
    for dx, dy in cfg.offsets():
        prev = history.previous(dx, dy)
        has = prev >= 0
        dt = np.where(has, t - t[np.maximum(prev, 0)], np.inf)
        np.minimum(best, dt, out=best)
    return best


def baf_denoise(events: EventArray, cfg: BafConfig) -> Decisions:
    events.validate(cfg.geometry)
    dt = neighbor_dt(events, cfg)
    return Decisions(events, dt <= cfg.tau_us, -dt)


class BafSession:
    """Event-at-a-time BAF, the reference for :func:`baf_denoise`."""

    def __init__(self, cfg: BafConfig):
        self.cfg = cfg
        g = cfg.geometry
        self.last = np.full((g.height, g.width), -1, dtype=np.int64)

    def process(self, e: Event) -> Decision:
        g = self.cfg.geometry
        best = np.inf
        for dx, dy in self.cfg.offsets():
            x, y = e.x + dx, e.y + dy
            if 0 <= x < g.width and 0 <= y < g.height and self.last[y, x] >= 0:
                best = min(best, e.t_us - int(self.last[y, x]))
        self.last[e.y, e.x] = e.t_us
        return Decision(e, "signal" if best <= self.cfg.tau_us else "noise", -best)
