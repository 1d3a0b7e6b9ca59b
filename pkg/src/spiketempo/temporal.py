"""Temporal grouping and length-mismatched residual operators.

All functions act on (time, batch, units) tensors. Grouping collapses a
window of ``length`` consecutive time steps to one output frame by
elementwise max (logical OR on {0,1} inputs). Two grouping layouts exist:

* overlap:    windows start every ``stride`` steps, so windows may share
              time steps. If the last full window does not land on the last
              start position ((T - length) % stride != 0), one extra frame
              holding the raw final time step is appended.
* no_overlap: windows start every ``length + stride - 1`` steps, so they
              never share time steps; ``stride - 1`` steps are skipped
              between windows. If another window would start before the end
              of the tensor but cannot be filled, the raw final time step is
              appended as the last frame.

The residual path adds two tensors of unequal time length after
right-padding the shorter one with zeros; left padding is deliberately
unsupported (it would shift learned delays). On {0,1} inputs the sum takes
values in {0,1,2}; a 2 marks coincident spikes on both branches and is
propagated by the max reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

VARIANT_OVERLAP = "overlap"
VARIANT_NO_OVERLAP = "no_overlap"


@dataclass(frozen=True)
class TrConfig:
    """Parameters of one temporal-grouping operator.

    ``reduction`` may be "or" or "max"; both run the same max code path
    since OR is the restriction of max to {0,1} values.
    """

    variant: str
    length: int
    stride: int = 1
    reduction: str = "max"

    def __post_init__(self):
        if self.variant not in (VARIANT_OVERLAP, VARIANT_NO_OVERLAP):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.length < 1:
            raise ConfigError(f"length must be >= 1, got {self.length}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.reduction not in ("or", "max"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")


def _check_input(x, length: int, stride: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (time, batch, units) tensor, got ndim={x.ndim}")
    if length < 1 or stride < 1:
        raise ConfigError(f"length and stride must be >= 1, got {length}, {stride}")
    if length > x.shape[0]:
        raise ShapeError(f"group length {length} exceeds time axis {x.shape[0]}")
    return x


def tr_overlap(x, length: int, stride: int = 1) -> np.ndarray:
    """Group with possibly overlapping windows; see module docstring."""
    x = _check_input(x, length, stride)
    t_len = x.shape[0]
    windows = sliding_window_view(x, length, axis=0)[::stride]
    out = windows.max(axis=-1)
    if (t_len - length) % stride != 0:
        out = np.concatenate([out, x[t_len - 1 : t_len]], axis=0)
    return out


def tr_no_overlap(x, length: int, stride: int = 1) -> np.ndarray:
    """Group with disjoint windows; see module docstring."""
    x = _check_input(x, length, stride)
    t_len = x.shape[0]
    step = length + stride - 1
    full = (t_len - length) // step + 1
    starts = np.arange(full) * step
    gathered = x[starts[:, None] + np.arange(length)[None, :]]
    out = gathered.max(axis=1)
    if full * step < t_len:
        out = np.concatenate([out, x[t_len - 1 : t_len]], axis=0)
    return out


def max_pool_time(x, length: int, stride: int = 1) -> np.ndarray:
    """Plain 1-D max pooling over time: overlap-style windows, remainder truncated.

    Ablation baseline; unlike the grouping operators above it never appends
    the final time step.
    """
    x = _check_input(x, length, stride)
    windows = sliding_window_view(x, length, axis=0)[::stride]
    return windows.max(axis=-1)


def tr_apply(x, config: TrConfig) -> np.ndarray:
    """Dispatch on config.variant."""
    if config.variant == VARIANT_OVERLAP:
        return tr_overlap(x, config.length, config.stride)
    return tr_no_overlap(x, config.length, config.stride)


def tr_oracle(x, config: TrConfig) -> np.ndarray:
    """Reference implementation by literal window enumeration.

    Pure Python loops, no vectorized shortcuts; kept deliberately separate
    from the operators above so the two routes stay independent checks of
    each other.
    """
    x = _check_input(x, config.length, config.stride)
    t_len, batch, units = x.shape
    length = config.length
    if config.variant == VARIANT_OVERLAP:
        step = config.stride
    else:
        step = config.length + config.stride - 1

    starts = []
    i = 0
    while i + length <= t_len:
        starts.append(i)
        i += step

    if config.variant == VARIANT_OVERLAP:
        remainder = (t_len - length) % config.stride != 0
    else:
        remainder = len(starts) * step < t_len

    out = np.zeros((len(starts) + int(remainder), batch, units), dtype=x.dtype)
    for g, s in enumerate(starts):
        for b in range(batch):
            for n in range(units):
                m = x[s, b, n]
                for t in range(s + 1, s + length):
                    if x[t, b, n] > m:
                        m = x[t, b, n]
                out[g, b, n] = m
    if remainder:
        for b in range(batch):
            for n in range(units):
                out[-1, b, n] = x[t_len - 1, b, n]
    return out


def grouped_t_len(t_len: int, length: int, stride: int, variant: str) -> int:
    """Closed-form output length of the grouping operators."""
    if variant == VARIANT_OVERLAP:
        full = (t_len - length) // stride + 1
        return full + int((t_len - length) % stride != 0)
    step = length + stride - 1
    full = (t_len - length) // step + 1
    return full + int(full * step < t_len)


# --------------------------------------------------------------------------
# training-path twins: forward with gradient routing tape
# --------------------------------------------------------------------------

def grouped_forward_tape(x, op: str, length: int, stride: int = 1):
    """Forward for "overlap" / "no_overlap" / "pool" returning (out, idx).

    ``idx`` holds, per output element, the absolute input time index that
    receives the gradient: the first maximal element of the window, or the
    final time step for an appended remainder frame.
    """
    x = _check_input(x, length, stride)
    t_len = x.shape[0]
    if op in (VARIANT_OVERLAP, "pool"):
        windows = sliding_window_view(x, length, axis=0)[::stride]
        out = windows.max(axis=-1)
        rel = windows.argmax(axis=-1)
        n_full = out.shape[0]
        starts = (np.arange(n_full) * stride)[:, None, None]
        idx = starts + rel
        remainder = op == VARIANT_OVERLAP and (t_len - length) % stride != 0
    elif op == VARIANT_NO_OVERLAP:
        step = length + stride - 1
        full = (t_len - length) // step + 1
        starts = np.arange(full) * step
        gathered = x[starts[:, None] + np.arange(length)[None, :]]
        out = gathered.max(axis=1)
        idx = starts[:, None, None] + gathered.argmax(axis=1)
        remainder = full * step < t_len
    else:
        raise ConfigError(f"unknown grouping op {op!r}")
    if remainder:
        out = np.concatenate([out, x[t_len - 1 : t_len]], axis=0)
        last = np.full((1,) + x.shape[1:], t_len - 1, dtype=idx.dtype)
        idx = np.concatenate([idx, last], axis=0)
    return out, idx


def grouped_backward(g_out, idx, in_shape):
    """Scatter output gradients back to the selected input time indices."""
    g_in = np.zeros(in_shape, dtype=g_out.dtype)
    _, batch, units = in_shape
    b_idx = np.arange(batch)[None, :, None]
    n_idx = np.arange(units)[None, None, :]
    np.add.at(g_in, (idx, b_idx, n_idx), g_out)
    return g_in


# --------------------------------------------------------------------------
# length-mismatched residual
# --------------------------------------------------------------------------

def nar_align(a, b):
    """Right-pad the shorter of two tensors with zeros to the longer length.

    Returns (a', b') with equal time axes; the longer input is returned
    unchanged (same object), and the padded copy is zero beyond its
    original extent.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError("expected (time, batch, units) tensors")
    if a.shape[1:] != b.shape[1:]:
        raise ShapeError(
            f"batch/unit dimensions differ: {a.shape[1:]} vs {b.shape[1:]}"
        )
    target = max(a.shape[0], b.shape[0])

    def pad(v):
        if v.shape[0] == target:
            return v
        fill = np.zeros((target - v.shape[0],) + v.shape[1:], dtype=v.dtype)
        return np.concatenate([v, fill], axis=0)

    return pad(a), pad(b)


def nar_residual(x, d):
    """Residual sum of a module's input and output after right alignment.

    On {0,1} inputs the result lies in {0,1,2}; a value of 2 appears exactly
    where both branches carry a spike.
    """
    xa, da = nar_align(x, d)
    return da + xa
