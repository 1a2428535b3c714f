"""Timestamp-polarity image (TPI) and the event-to-MLP feature stage.

For each event the 7x7 neighborhood of the TPI is read *before* the
event's own write.  Each cell contributes a 4-bit age code and a signed
polarity; the 98-element activation vector is the 49 ages (row-major,
top-left first) followed by the 49 polarities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventArray, Event, SensorGeometry, BoundsError, TS_MASK, ms_timestamp, wrap16
from .qarith import QFormat, S4, quantize_codes

PATCH = 7
RADIUS = PATCH // 2
N_CELLS = PATCH * PATCH
N_INPUTS = 2 * N_CELLS
CENTER = N_CELLS // 2
AGE_LEVELS = 16  # 4-bit age code
LAYOUT = "ages49-pol49-rowmajor"

# (dy, dx) per patch cell in row-major order
OFFSETS = [(dy, dx) for dy in range(-RADIUS, RADIUS + 1) for dx in range(-RADIUS, RADIUS + 1)]


@dataclass(frozen=True)
class AgeWindow:
    tau_ms: int = 64

    def __post_init__(self):
        t = self.tau_ms
        if t < 1 or t > 256 or t & (t - 1):
            raise ValueError(f"age window must be a power of two in [1, 256] ms, got {t}")

    @property
    def shift(self) -> int:
        """Right shift applied to the ms delta (negative = left shift)."""
        return self.tau_ms.bit_length() - 1 - 4


def quantized_age(delta_ms, tau: AgeWindow):
    """4-bit age code ``clamp(16 - (delta >> s), 0, 15)``; scalar or array."""
    s = tau.shift
    if isinstance(delta_ms, np.ndarray):
        d = delta_ms >> s if s >= 0 else delta_ms << -s
        return np.clip(AGE_LEVELS - d, 0, AGE_LEVELS - 1)
    d = delta_ms >> s if s >= 0 else delta_ms << -s
    return max(0, min(AGE_LEVELS - 1, AGE_LEVELS - d))


@dataclass
class InputVector:
    """Per-event MLP input: 49 age codes (1/16 units) and 49 polarity signs."""

    ages: np.ndarray
    polarities: np.ndarray
    layout: str = LAYOUT

    def codes(self, fmt: QFormat = S4) -> np.ndarray:
        """All 98 inputs after the input quantizer, as integer codes of ``fmt``."""
        return quantize_codes(self.real(), fmt)

    def real(self) -> np.ndarray:
        """Pre-quantizer values: ages in [0, 15/16], polarities in {-1, 0, 1}."""
        return np.concatenate([np.asarray(self.ages, dtype=np.float64) / AGE_LEVELS,
                               np.asarray(self.polarities, dtype=np.float64)])

    def __len__(self):
        return len(self.ages) + len(self.polarities)


class TpiMemory:
    """W x H store of wrapped ms timestamps and polarities."""

    def __init__(self, geometry: SensorGeometry = SensorGeometry()):
        self.geometry = geometry
        shape = (geometry.height, geometry.width)
        self.t_ms = np.zeros(shape, dtype=np.int64)
        self.polarity = np.zeros(shape, dtype=np.int8)
        self.valid = np.zeros(shape, dtype=bool)

    def copy(self) -> "TpiMemory":
        other = TpiMemory(self.geometry)
        other.t_ms[:] = self.t_ms
        other.polarity[:] = self.polarity
        other.valid[:] = self.valid
        return other

    def update(self, e: Event):
        g = self.geometry
        if not (0 <= e.x < g.width and 0 <= e.y < g.height):
            raise BoundsError(f"pixel ({e.x},{e.y}) outside {g.width}x{g.height}")
        self.t_ms[e.y, e.x] = wrap16(ms_timestamp(e.t_us))
        self.polarity[e.y, e.x] = e.polarity
        self.valid[e.y, e.x] = True

    def extract_features(self, e: Event, tau: AgeWindow) -> InputVector:
        g = self.geometry
        now = wrap16(ms_timestamp(e.t_us))
        ages = np.zeros(N_CELLS, dtype=np.int8)
        pols = np.zeros(N_CELLS, dtype=np.int8)
        for k, (dy, dx) in enumerate(OFFSETS):
            x, y = e.x + dx, e.y + dy
            if not (0 <= x < g.width and 0 <= y < g.height) or not self.valid[y, x]:
                continue
            age = quantized_age((now - int(self.t_ms[y, x])) & TS_MASK, tau)
            if age:
                ages[k] = age
                pols[k] = self.polarity[y, x]
        pols[CENTER] = e.polarity
        return InputVector(ages, pols)


def extract_features(tpi: TpiMemory, e: Event, tau: AgeWindow) -> InputVector:
    return tpi.extract_features(e, tau)


def update(tpi: TpiMemory, e: Event):
    tpi.update(e)


class PixelHistory:
    """Lookup of the latest earlier event at any pixel, for a whole stream.

    ``previous(dx, dy)`` gives, for every event i, the index of the last
    event before i at pixel (x+dx, y+dy), or -1 when there is none or the
    pixel is off the array.  That is exactly what a last-writer-wins pixel
    memory holds just before event i's own write.

    Work is done in (pixel, index) order, where the queries for any fixed
    offset are already sorted; ``previous_sorted`` returns results in that
    order (``self.order`` maps back to stream positions).
    """

    def __init__(self, events: EventArray, geometry: SensorGeometry):
        self.geometry = geometry
        n = len(events)
        self.n = n
        pix = events.y * geometry.width + events.x
        self.order = np.lexsort((np.arange(n), pix))
        self._pix = pix[self.order]
        self._x = events.x[self.order]
        self._y = events.y[self.order]
        self._keys = self._pix * n + self.order

    def previous_sorted(self, dx: int, dy: int) -> np.ndarray:
        g, n = self.geometry, self.n
        qpix = self._pix + (dy * g.width + dx)
        pos = np.searchsorted(self._keys, qpix * n + self.order, side="left") - 1
        hit = np.maximum(pos, 0)
        ok = (pos >= 0) & (self._pix[hit] == qpix)
        if dx:
            qx = self._x + dx
            ok &= (qx >= 0) & (qx < g.width)
        if dy:
            qy = self._y + dy
            ok &= (qy >= 0) & (qy < g.height)
        return np.where(ok, self.order[hit], -1)

    def previous(self, dx: int, dy: int) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        out[self.order] = self.previous_sorted(dx, dy)
        return out


def extract_features_batch(events: EventArray, geometry: SensorGeometry, tau: AgeWindow):
    """Features for a whole stream replayed through a fresh TPI.

    Returns ``(ages, polarities)``, each ``(n, 49)`` int8, identical to
    calling ``extract_features`` then ``update`` per event in order.
    """
    n = len(events)
    ages = np.zeros((n, N_CELLS), dtype=np.int8)
    pols = np.zeros((n, N_CELLS), dtype=np.int8)
    if n == 0:
        return ages, pols
    now = wrap16(ms_timestamp(events.t_us))
    history = PixelHistory(events, geometry)
    now_sorted = now[history.order]
    # built cell-major in (pixel, index) row order, transposed and reordered once
    ages_t = np.zeros((N_CELLS, n), dtype=np.int8)
    pols_t = np.zeros((N_CELLS, n), dtype=np.int8)
    for k, (dy, dx) in enumerate(OFFSETS):
        prev = history.previous_sorted(dx, dy)
        src = np.maximum(prev, 0)
        age = quantized_age((now_sorted - now[src]) & TS_MASK, tau)
        age[prev < 0] = 0
        ages_t[k] = age
        pols_t[k] = np.where(age > 0, events.p[src], 0)
    ages[history.order] = ages_t.T
    pols[history.order] = pols_t.T
    pols[:, CENTER] = events.p
    return ages, pols


def features_to_real(ages: np.ndarray, pols: np.ndarray) -> np.ndarray:
    """Batch version of ``InputVector.real``: (n, 98) float64."""
    return np.concatenate([ages.astype(np.float64) / AGE_LEVELS, pols.astype(np.float64)], axis=1)


def features_to_codes(ages: np.ndarray, pols: np.ndarray, fmt: QFormat = S4) -> np.ndarray:
    if fmt == S4:
        # exact fast path: ages are already 1/16 codes, +1 saturates to 15
        return np.concatenate([ages.astype(np.int64),
                               np.where(pols > 0, S4.code_max, np.where(pols < 0, S4.code_min, 0))],
                              axis=1)
    return quantize_codes(features_to_real(ages, pols), fmt)
