"""Independent reference implementations used only by the tests."""

from fractions import Fraction

import numpy as np


# every quantity below is an exact integer multiple of 2**-DEN_BITS
DEN_BITS = 24


def _div_round_half_away(num: int, den: int) -> int:
    q, r = divmod(abs(num), den)
    q += 2 * r >= den
    return q if num >= 0 else -q


def _clip(v, lo, hi):
    return min(max(v, lo), hi)


def mlp_logit_rational(w1, b1, w2, b2, x_real, bits=4):
    """Exact evaluation of the quantized 98-10-1 datapath.

    ``w*`` are integer codes with ``bits`` fraction bits; ``x_real`` holds
    the real pre-quantizer inputs.  The accumulator is a signed value with
    6 integer bits that clips after every addition, products in index
    order, bias last.  Values are kept as Python integers over a common
    denominator of 2**24; the logit is returned as a Fraction.
    """
    one = 1 << DEN_BITS
    step = one >> bits
    acc_frac = max(9, 2 * bits)
    acc_lo, acc_hi = -64 * one, 64 * one - (one >> acc_frac)

    def quant(v, lo, hi):        # v: numerator over 2**24
        return _clip(_div_round_half_away(v, step) * step, lo, hi)

    x = [quant(int(Fraction(float(v)) * one), -one, one - step) for v in x_real]

    def neuron(weights, inputs, bias):
        acc = 0
        for wc, xi in zip(weights, inputs):
            # (code * 2**-bits) * (xi * 2**-24) re-expressed over 2**24
            acc = _clip(acc + int(wc) * xi // (1 << bits), acc_lo, acc_hi)
        return _clip(acc + int(bias) * step, acc_lo, acc_hi)

    w1 = np.asarray(w1)
    hidden = [quant(neuron(w1[:, j], x, b1[j]), 0, one - step) for j in range(w1.shape[1])]
    return Fraction(neuron(w2, hidden, b2), one)


def mann_whitney_auc(scores, labels) -> float:
    """Pairwise probability a signal outranks a noise sample, ties counted half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (pos.size * neg.size))


def finite_difference(f, params: dict, name: str, index, eps=1e-6) -> float:
    p_plus = {k: v.copy() for k, v in params.items()}
    p_minus = {k: v.copy() for k, v in params.items()}
    p_plus[name][index] += eps
    p_minus[name][index] -= eps
    return (f(p_plus) - f(p_minus)) / (2 * eps)
