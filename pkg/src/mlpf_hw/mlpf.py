"""98-10-1 quantized MLP filter: integer inference, float reference, weight files.

Integer datapath, per hidden unit j::

    acc = 0
    for i in 0..97:  acc = sat(acc + align(w1[i, j] * x[i]))
    acc = sat(acc + align(b1[j]))
    h[j] = quantized_relu(acc)

and the same again for the single output unit over the 10 hidden codes.
Products of two b-fraction-bit codes carry 2b fraction bits and are
shifted onto the accumulator scale (Q6.9 for b <= 4).  The output
accumulator is the logit; no sigmoid is applied in hardware.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qarith
from .qarith import QFormat, QValue, SaturationCounter, accumulator_format
from .tpi import InputVector, LAYOUT, N_INPUTS

N_HIDDEN = 10
FILE_VERSION = 1
ARCH = f"{N_INPUTS}-{N_HIDDEN}-1"
SIGNAL, NOISE = "signal", "noise"


class ContractError(ValueError):
    pass


class WeightFileError(ValueError):
    pass


@dataclass(frozen=True)
class MlpfFormats:
    bits: int = 4

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bit width must be in [2, 8], got {self.bits}")

    @property
    def weight(self) -> QFormat:
        return QFormat(self.bits, signed=True)

    @property
    def input(self) -> QFormat:
        return QFormat(self.bits, signed=True)

    @property
    def hidden(self) -> QFormat:
        return QFormat(self.bits, signed=False)

    @property
    def acc(self) -> QFormat:
        return accumulator_format(self.bits)

    @property
    def product_frac(self) -> int:
        return 2 * self.bits


@dataclass
class MlpfWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: int
    formats: MlpfFormats = field(default_factory=MlpfFormats)
    layout: str = LAYOUT

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.int64).reshape(N_INPUTS, N_HIDDEN)
        self.b1 = np.asarray(self.b1, dtype=np.int64).reshape(N_HIDDEN)
        self.w2 = np.asarray(self.w2, dtype=np.int64).reshape(N_HIDDEN)
        self.b2 = int(self.b2)
        fmt = self.formats.weight
        for name in ("w1", "b1", "w2"):
            arr = getattr(self, name)
            if arr.min() < fmt.code_min or arr.max() > fmt.code_max:
                raise ValueError(f"{name} has codes outside {fmt.tag()} range")
        if not fmt.code_min <= self.b2 <= fmt.code_max:
            raise ValueError(f"b2 code {self.b2} outside {fmt.tag()} range")

    @classmethod
    def zeros(cls, bits: int = 4) -> "MlpfWeights":
        return cls(np.zeros((N_INPUTS, N_HIDDEN)), np.zeros(N_HIDDEN), np.zeros(N_HIDDEN), 0,
                   MlpfFormats(bits))

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def to_real(self) -> "FloatWeights":
        s = self.formats.weight.scale
        return FloatWeights(self.w1 / s, self.b1 / s, self.w2 / s, self.b2 / s)


@dataclass
class FloatWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def quantized(self, bits: int = 4) -> MlpfWeights:
        fmt = MlpfFormats(bits).weight
        q = lambda a: qarith.quantize_codes(a, fmt)  # noqa: E731
        return MlpfWeights(q(self.w1), q(self.b1), q(self.w2), int(q(self.b2)), MlpfFormats(bits))


@dataclass(frozen=True)
class Logit:
    value: QValue

    @property
    def code(self) -> int:
        return self.value.code


@dataclass(frozen=True)
class Threshold:
    code: int = 0

    def __post_init__(self):
        if not -(1 << 31) <= self.code < (1 << 31):
            raise ValueError("threshold code out of range")

    @classmethod
    def from_value(cls, value: float, fmt: QFormat = qarith.ACC16) -> "Threshold":
        return cls(qarith.quantize(value, fmt).code)


def infer_quantized(w: MlpfWeights, x: InputVector,
                    counter: SaturationCounter | None = None) -> Logit:
    """Bit-exact integer inference for one activation vector."""
    if x.layout != w.layout:
        raise ContractError(f"input layout {x.layout!r} does not match weights {w.layout!r}")
    if len(x) != N_INPUTS:
        raise ContractError(f"expected {N_INPUTS} inputs, got {len(x)}")
    return infer_codes(w, [int(c) for c in x.codes(w.formats.input)], counter)


def infer_codes(w: MlpfWeights, x_codes, counter: SaturationCounter | None = None) -> Logit:
    """Integer inference on pre-quantized input codes (scalar Python ints)."""
    f = w.formats
    acc_fmt, pf, wf = f.acc, f.product_frac, f.weight.fraction_bits
    w1 = w.w1.tolist()
    hidden = []
    for j in range(N_HIDDEN):
        acc = QValue(0, acc_fmt)
        for i in range(N_INPUTS):
            acc = qarith.acc_add(acc, w1[i][j] * x_codes[i], pf, counter)
        acc = qarith.acc_add(acc, int(w.b1[j]), wf, counter)
        hidden.append(qarith.quantized_relu(acc, f.hidden).code)
    acc = QValue(0, acc_fmt)
    for j in range(N_HIDDEN):
        acc = qarith.acc_add(acc, int(w.w2[j]) * hidden[j], pf, counter)
    acc = qarith.acc_add(acc, w.b2, wf, counter)
    return Logit(acc)


def _saturating_dot(terms: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Sequential saturating sum over the last axis of already-aligned terms.

    Rows whose absolute term sum fits the range cannot clip at any
    partial sum, so they take a plain sum; the rest are scanned in order.
    """
    total = terms.sum(axis=-1)
    safe = np.abs(terms).sum(axis=-1) <= min(hi, -lo)
    if safe.all():
        return total
    out = total.copy()
    idx = np.nonzero(~safe)
    rows = terms[idx]
    acc = np.zeros(rows.shape[:-1], dtype=np.int64)
    for k in range(rows.shape[-1]):
        acc = np.clip(acc + rows[..., k], lo, hi)
    out[idx] = acc
    return out


def infer_batch(w: MlpfWeights, x_codes: np.ndarray, chunk: int = 65536) -> np.ndarray:
    """Vectorized integer inference; ``x_codes`` is (n, 98) input-format codes.

    Returns int64 logit codes in the accumulator format, bit-identical to
    :func:`infer_codes` row by row.
    """
    x_codes = np.asarray(x_codes, dtype=np.int64)
    if x_codes.ndim != 2 or x_codes.shape[1] != N_INPUTS:
        raise ContractError(f"expected (n, {N_INPUTS}) input codes, got {x_codes.shape}")
    out = np.empty(len(x_codes), dtype=np.int64)
    for start in range(0, len(x_codes), chunk):
        out[start:start + chunk] = _infer_chunk(w, x_codes[start:start + chunk])
    return out


def _infer_chunk(w: MlpfWeights, x: np.ndarray) -> np.ndarray:
    f = w.formats
    acc, pf, wf = f.acc, f.product_frac, f.weight.fraction_bits
    lo, hi = acc.code_min, acc.code_max
    al = lambda c, frm: qarith.realign_array(c, frm, acc.fraction_bits)  # noqa: E731
    # fast path: exact integer matmul when no partial sum can leave the range
    pre = x @ w.w1
    mag = np.abs(x) @ np.abs(w.w1)
    shift = acc.fraction_bits - pf
    if shift >= 0:
        bias = al(w.b1, wf)
        bound = (mag << shift) + np.abs(bias)
        pre = (pre << shift) + bias
        safe = bound <= min(hi, -lo)
    else:
        safe = np.zeros(pre.shape, dtype=bool)
    rows = np.nonzero(~safe.all(axis=1))[0]
    if rows.size:
        terms = al(x[rows][:, :, None] * w.w1[None, :, :], pf)          # (r, 98, 10)
        terms = np.concatenate([terms, np.broadcast_to(al(w.b1, wf), (rows.size, 1, N_HIDDEN))], axis=1)
        pre[rows] = _saturating_dot(np.moveaxis(terms, 1, 2), lo, hi)
    hidden = np.clip(qarith.realign_array(pre, acc.fraction_bits, f.hidden.fraction_bits),
                     0, f.hidden.code_max)
    terms = al(hidden * w.w2[None, :], pf)
    terms = np.concatenate([terms, np.full((len(x), 1), al(np.array([w.b2]), wf)[0])], axis=1)
    return _saturating_dot(terms, lo, hi)


def logit_value(code, w: MlpfWeights):
    return np.asarray(code) / w.formats.acc.scale


def float_logit(w: FloatWeights, x_real: np.ndarray) -> np.ndarray:
    x_real = np.asarray(x_real, dtype=np.float64)
    h = np.maximum(x_real @ w.w1 + w.b1, 0.0)
    return h @ w.w2 + w.b2


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def infer_float(w: FloatWeights, x_real) -> float | np.ndarray:
    """Dense -> ReLU -> dense -> sigmoid in float64; scalar for a 1-D input."""
    p = sigmoid(float_logit(w, x_real))
    return float(p) if p.ndim == 0 else p


def classify(logit: Logit | int, thr: Threshold) -> str:
    code = logit.code if isinstance(logit, Logit) else int(logit)
    return SIGNAL if code >= thr.code else NOISE


def classify_batch(codes: np.ndarray, thr: Threshold) -> np.ndarray:
    """Boolean signal mask."""
    return np.asarray(codes) >= thr.code


def sparsity(w: MlpfWeights) -> float:
    """Fraction of the 1001 parameters whose code is zero."""
    flat = w.flat()
    return float(np.count_nonzero(flat == 0)) / flat.size


# --- weight file -------------------------------------------------------------

def format_weights(w: MlpfWeights) -> str:
    f = w.formats
    lines = [f"version={FILE_VERSION}", f"arch={ARCH}", f"layout={w.layout}",
             f"wfmt={f.weight.tag()}", f"afmt={f.hidden.tag()}/{f.acc.tag()}", "[w1]"]
    lines += [" ".join(str(v) for v in row) for row in w.w1.tolist()]
    lines += ["[b1]", " ".join(str(v) for v in w.b1.tolist()),
              "[w2]", *(str(v) for v in w.w2.tolist()),
              "[b2]", str(w.b2)]
    return "\n".join(lines) + "\n"


def save_weights(w: MlpfWeights, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_weights(w))


def parse_weights(text: str) -> MlpfWeights:
    header, sections, current = {}, {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in sections:
                raise WeightFileError(f"line {n}: duplicate section [{current}]")
            sections[current] = []
        elif current is None:
            if "=" not in line:
                raise WeightFileError(f"line {n}: expected key=value header")
            k, v = line.split("=", 1)
            header[k.strip()] = v.strip()
        else:
            try:
                sections[current].extend(int(tok) for tok in line.split())
            except ValueError:
                raise WeightFileError(f"line {n}: non-integer weight code") from None

    if header.get("version") != str(FILE_VERSION):
        raise WeightFileError(f"unsupported weight file version {header.get('version')!r}")
    if header.get("arch") != ARCH:
        raise WeightFileError(f"unsupported architecture {header.get('arch')!r}")
    layout = header.get("layout", "")
    if layout != LAYOUT:
        raise WeightFileError(f"unsupported input layout {layout!r}")
    try:
        wfmt = QFormat.from_tag(header["wfmt"])
        hfmt_tag, afmt_tag = header["afmt"].split("/")
        formats = MlpfFormats(wfmt.fraction_bits)
    except (KeyError, ValueError) as exc:
        raise WeightFileError(f"bad format header: {exc}") from None
    if (wfmt != formats.weight or hfmt_tag != formats.hidden.tag()
            or afmt_tag != formats.acc.tag()):
        raise WeightFileError(f"unsupported format combination wfmt={header['wfmt']} "
                              f"afmt={header['afmt']}")

    expected = {"w1": N_INPUTS * N_HIDDEN, "b1": N_HIDDEN, "w2": N_HIDDEN, "b2": 1}
    if set(sections) != set(expected):
        raise WeightFileError(f"sections must be {sorted(expected)}, got {sorted(sections)}")
    total = sum(len(v) for v in sections.values())
    if total != sum(expected.values()):
        raise WeightFileError(f"expected {sum(expected.values())} parameters, found {total}")
    for name, count in expected.items():
        if len(sections[name]) != count:
            raise WeightFileError(f"[{name}] needs {count} codes, found {len(sections[name])}")
    fmt = formats.weight
    for name, vals in sections.items():
        bad = [v for v in vals if not fmt.code_min <= v <= fmt.code_max]
        if bad:
            raise WeightFileError(f"[{name}] code {bad[0]} outside {fmt.tag()} range "
                                  f"[{fmt.code_min}, {fmt.code_max}]")
    return MlpfWeights(sections["w1"], sections["b1"], sections["w2"], sections["b2"][0], formats)


def load_weights(path) -> MlpfWeights:
    with open(path, encoding="utf-8") as fh:
        return parse_weights(fh.read())


def quantization_error_bound(w: FloatWeights, x_real, bits: int = 4) -> float:
    """Upper bound on |float logit - quantized logit| for one input vector.

    Uses the actual rounding error of every tensor and propagates it
    through both layers (ReLU is 1-Lipschitz; hidden rounding adds half a
    step plus any clipping above the hidden range).  Accumulator
    saturation is not covered.
    """
    f = MlpfFormats(bits)
    wq = w.quantized(bits).to_real()
    x = np.asarray(x_real, dtype=np.float64)
    xq = dequantize_input(x, f)
    dz = np.abs(x - xq) @ np.abs(w.w1) + np.abs(xq) @ np.abs(w.w1 - wq.w1) + np.abs(w.b1 - wq.b1)
    h = np.maximum(x @ w.w1 + w.b1, 0.0)
    dh = dz + f.hidden.step / 2 + np.maximum(h + dz - f.hidden.max_value, 0.0)
    return float(np.abs(w.w2) @ dh + np.abs(w.w2 - wq.w2).sum() * f.hidden.max_value
                 + abs(w.b2 - wq.b2))


def dequantize_input(x_real, formats: MlpfFormats) -> np.ndarray:
    return qarith.dequantize(qarith.quantize_codes(x_real, formats.input), formats.input)


def n_distinct(codes) -> int:
    return int(np.unique(np.asarray(codes)).size)
