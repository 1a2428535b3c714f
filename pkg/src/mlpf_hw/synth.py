"""Labeled synthetic datasets: moving straight edges plus shot noise.

Each edge is an infinite line moving along its normal.  Pixel centers sit
at integer coordinates; when the line passes a center the pixel emits
``events_per_crossing`` events of the edge's polarity, spaced by
``spacing_us`` after a per-pixel jitter drawn from the scene seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import NOISE, SIGNAL, EventArray, SensorGeometry


@dataclass(frozen=True)
class Edge:
    orientation_deg: float = 0.0   # direction of motion; 0 = moving +x (a vertical edge)
    speed: float = 100.0           # px/s along the normal
    polarity: int = 1
    start: float = -1.0            # line position along the normal at t=0, px

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("edge speed must be positive")
        if self.polarity not in (-1, 1):
            raise ValueError("edge polarity must be -1 or +1")


@dataclass(frozen=True)
class SceneConfig:
    edges: tuple = (Edge(),)
    duration: float = 1.0
    events_per_crossing: int = 1
    spacing_us: int = 300
    jitter_us: int = 0
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.events_per_crossing < 1:
            raise ValueError("events_per_crossing must be >= 1")


@dataclass(frozen=True)
class NoiseConfig:
    rate: float = 5.0
    duration: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("noise rate must be >= 0")


def _edge_crossings(edge: Edge, scene: SceneConfig, rng):
    g = scene.geometry
    theta = math.radians(edge.orientation_deg)
    ys, xs = np.mgrid[0:g.height, 0:g.width]
    proj = xs * math.cos(theta) + ys * math.sin(theta)
    t_cross = (proj - edge.start) / edge.speed
    hit = (t_cross >= 0) & (t_cross < scene.duration)
    x, y, tc = xs[hit], ys[hit], t_cross[hit]
    k = scene.events_per_crossing
    t0 = np.floor(tc * 1e6).astype(np.int64)
    if scene.jitter_us:
        t0 = t0 + rng.integers(0, scene.jitter_us, size=t0.size)
    t = (t0[:, None] + scene.spacing_us * np.arange(k)[None, :]).ravel()
    return t, np.repeat(x, k), np.repeat(y, k), np.full(t.size, edge.polarity)


def generate_signal(scene: SceneConfig) -> EventArray:
    """Noise-free labeled stream; deterministic for a given config."""
    rng = np.random.default_rng(scene.seed)
    parts = [_edge_crossings(e, scene, rng) for e in scene.edges]
    t = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    keep = t < int(round(scene.duration * 1e6))
    cols = [np.concatenate([p[i] for p in parts])[keep] for i in range(4)] if parts else [t] * 4
    order = np.lexsort((cols[1], cols[2], cols[0]))
    t, x, y, p = (c[order] for c in cols)
    return EventArray(t, x, y, p, np.full(t.size, SIGNAL))


def shot_noise(noise: NoiseConfig, geometry: SensorGeometry) -> EventArray:
    """Homogeneous Poisson noise, independent per pixel, labeled noise."""
    rng = np.random.default_rng(noise.seed)
    counts = rng.poisson(noise.rate * noise.duration, size=geometry.n_pixels)
    n = int(counts.sum())
    pix = np.repeat(np.arange(geometry.n_pixels), counts)
    # given its count, a Poisson process's arrival times are iid uniform
    t = np.floor(rng.random(n) * noise.duration * 1e6).astype(np.int64)
    p = np.where(rng.random(n) < 0.5, -1, 1)
    order = np.argsort(t, kind="stable")
    return EventArray(t[order], pix[order] % geometry.width, pix[order] // geometry.width,
                      p[order], np.full(n, NOISE))


def merge(a: EventArray, b: EventArray) -> EventArray:
    """Time-sorted union; on equal timestamps events of ``a`` come first."""
    t = np.concatenate([a.t_us, b.t_us])
    order = np.argsort(t, kind="stable")
    label = None
    if a.labeled and b.labeled:
        label = np.concatenate([a.label, b.label])[order]
    return EventArray(t[order], np.concatenate([a.x, b.x])[order],
                      np.concatenate([a.y, b.y])[order], np.concatenate([a.p, b.p])[order], label)


def inject_noise(signal: EventArray, noise: NoiseConfig,
                 geometry: SensorGeometry = SensorGeometry()) -> EventArray:
    if noise.rate == 0:
        return signal
    return merge(signal, shot_noise(noise, geometry))


def preset_scene(name: str, duration: float = 2.0, geometry: SensorGeometry = SensorGeometry(),
                 seed: int = 0) -> SceneConfig:
    """``dense``: several edges at mixed orientations; ``sparse``: one slow edge."""
    if name == "dense":
        edges = DENSE_EDGES
        return SceneConfig(edges, duration, events_per_crossing=1, jitter_us=2000,
                           geometry=geometry, seed=seed)
    if name == "sparse":
        edges = (Edge(0.0, 40.0, 1, -1.0),)
        return SceneConfig(edges, duration, events_per_crossing=1, jitter_us=2000,
                           geometry=geometry, seed=seed)
    raise ValueError(f"unknown preset {name!r}")


DENSE_EDGES = (
    Edge(0.0, 120.0, 1, -1.0),
    Edge(0.0, 120.0, -1, -60.0),
    Edge(90.0, 90.0, -1, -1.0),
    Edge(90.0, 90.0, 1, -50.0),
    Edge(35.0, 150.0, 1, -1.0),
    Edge(215.0, 110.0, -1, -440.0),
)

PRESETS = ("dense", "sparse")


def make_dataset(preset: str = "dense", noise_hz: float = 5.0, duration: float = 2.0,
                 seed: int = 0, geometry: SensorGeometry = SensorGeometry()) -> EventArray:
    scene = preset_scene(preset, duration, geometry, seed)
    return inject_noise(generate_signal(scene), NoiseConfig(noise_hz, duration, seed + 1), geometry)
