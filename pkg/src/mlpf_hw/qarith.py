"""Fixed-point quantization primitives.

Formats are described by (fraction bits, integer bits, sign).  A "4+1"
format is 4 fraction bits plus a sign bit: step 1/16, range [-1, 15/16].
Rounding is half-away-from-zero everywhere and saturation never wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QFormat:
    fraction_bits: int
    signed: bool = True
    integer_bits: int = 0

    def __post_init__(self):
        if self.fraction_bits < 1 or self.integer_bits < 0:
            raise ValueError(f"bad fixed-point format {self!r}")
        if self.total_bits > 32:
            raise ValueError(f"{self.total_bits}-bit format exceeds 32 bits")

    @property
    def total_bits(self) -> int:
        return int(self.signed) + self.integer_bits + self.fraction_bits

    @property
    def scale(self) -> int:
        return 1 << self.fraction_bits

    @property
    def step(self) -> float:
        return 1.0 / self.scale

    @property
    def code_min(self) -> int:
        return -(1 << (self.integer_bits + self.fraction_bits)) if self.signed else 0

    @property
    def code_max(self) -> int:
        return (1 << (self.integer_bits + self.fraction_bits)) - 1

    @property
    def min_value(self) -> float:
        return self.code_min / self.scale

    @property
    def max_value(self) -> float:
        return self.code_max / self.scale

    def tag(self) -> str:
        """Compact text tag, e.g. ``s4`` or ``s16q9``."""
        if self.integer_bits == 0:
            return f"{'s' if self.signed else 'u'}{self.fraction_bits}"
        return f"{'s' if self.signed else 'u'}{self.total_bits}q{self.fraction_bits}"

    @classmethod
    def from_tag(cls, tag: str) -> "QFormat":
        sign = tag[:1]
        if sign not in ("s", "u"):
            raise ValueError(f"bad format tag {tag!r}")
        signed = sign == "s"
        body = tag[1:]
        try:
            if "q" in body:
                total, frac = (int(v) for v in body.split("q"))
                return cls(frac, signed, total - frac - int(signed))
            return cls(int(body), signed, 0)
        except ValueError as exc:
            raise ValueError(f"bad format tag {tag!r}") from exc


# Table-1 formats: 4 fraction + sign for inputs/weights, unsigned 4-bit
# hidden activations, 16-bit accumulators with 6 integer bits.
S4 = QFormat(4, signed=True)
U4 = QFormat(4, signed=False)
ACC16 = QFormat(9, signed=True, integer_bits=6)


@dataclass(frozen=True)
class QValue:
    code: int
    format: QFormat

    def __post_init__(self):
        if not self.format.code_min <= self.code <= self.format.code_max:
            raise ValueError(f"code {self.code} out of range for {self.format.tag()}")

    @property
    def value(self) -> float:
        return self.code / self.format.scale


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    if isinstance(x, np.ndarray):
        return np.sign(x) * np.floor(np.abs(x) + 0.5)
    return math.copysign(math.floor(abs(x) + 0.5), x)


def clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def quantize(x: float, fmt: QFormat) -> QValue:
    if not math.isfinite(x):
        raise ValueError("cannot quantize a non-finite value")
    code = int(round_half_away(x * fmt.scale))
    return QValue(clamp(code, fmt.code_min, fmt.code_max), fmt)


def quantize_codes(x, fmt: QFormat) -> np.ndarray:
    """Vectorized ``quantize``; returns int64 codes."""
    x = np.asarray(x, dtype=np.float64)
    codes = round_half_away(x * fmt.scale)
    return np.clip(codes, fmt.code_min, fmt.code_max).astype(np.int64)


def dequantize(codes, fmt: QFormat) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / fmt.scale


def quantized_relu(x, fmt: QFormat = U4) -> QValue:
    """ReLU followed by unsigned quantization; accepts a QValue or a real."""
    if fmt.signed:
        raise ValueError("quantized_relu needs an unsigned output format")
    if isinstance(x, QValue):
        code = realign(x.code, x.format.fraction_bits, fmt.fraction_bits)
        return QValue(clamp(code, 0, fmt.code_max), fmt)
    return quantize(max(float(x), 0.0), fmt)


def realign(code: int, from_frac: int, to_frac: int) -> int:
    """Move an integer code between fraction-bit scales (rounding when narrowing)."""
    shift = to_frac - from_frac
    if shift >= 0:
        return code << shift
    half = 1 << (-shift - 1)
    mag = (abs(code) + half) >> -shift
    return mag if code >= 0 else -mag


def realign_array(codes: np.ndarray, from_frac: int, to_frac: int) -> np.ndarray:
    shift = to_frac - from_frac
    codes = np.asarray(codes, dtype=np.int64)
    if shift >= 0:
        return codes << shift
    half = 1 << (-shift - 1)
    mag = (np.abs(codes) + half) >> -shift
    return np.where(codes >= 0, mag, -mag)


@dataclass
class SaturationCounter:
    count: int = 0


def acc_add(acc: QValue, addend: int, addend_frac: int | None = None,
            counter: SaturationCounter | None = None) -> QValue:
    """Saturating accumulate of an integer-scaled addend into ``acc``.

    ``addend`` carries ``addend_frac`` fraction bits (defaults to the
    accumulator's own scale).  Clipping is tallied in ``counter``.
    """
    fmt = acc.format
    if addend_frac is not None:
        addend = realign(addend, addend_frac, fmt.fraction_bits)
    total = acc.code + addend
    code = clamp(total, fmt.code_min, fmt.code_max)
    if code != total and counter is not None:
        counter.count += 1
    return QValue(code, fmt)


def accumulator_format(operand_frac: int) -> QFormat:
    """Accumulator for products of two ``operand_frac`` operands.

    The 16-bit Q6.9 accumulator covers operands up to 4 fraction bits;
    wider operands get enough fraction bits to hold products exactly.
    """
    return QFormat(max(9, 2 * operand_frac), signed=True, integer_bits=6)
