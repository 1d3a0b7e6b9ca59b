"""Leaky integrate-and-fire neuron dynamics.

The update per time step is

    u[t] = eta * h[t-1] + i[t]
    s[t] = 1  if u[t] - v_th >= 0 else 0
    h[t] = u[t] * (1 - s[t]) + v_reset * s[t]   (hard reset)
    h[t] = u[t] - v_th * s[t]                   (soft reset)

with h the post-reset potential carried between steps. The boundary
convention fires exactly at threshold (>= 0), which keeps traces
deterministic and testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError

RESET_HARD = "hard"
RESET_SOFT = "soft"


@dataclass(frozen=True)
class LifParams:
    """Neuron constants: decay eta in [0,1], threshold v_th > 0, reset mode.

    eta = 0 is the memoryless neuron (u[t] = i[t]).
    """

    eta: float
    v_th: float
    v_reset: float = 0.0
    reset_mode: str = RESET_HARD
    alpha: float = 2.0  # surrogate-derivative sharpness, > 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if not self.v_th > 0.0:
            raise ConfigError(f"v_th must be > 0, got {self.v_th}")
        if not self.alpha > 0.0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.reset_mode not in (RESET_HARD, RESET_SOFT):
            raise ConfigError(f"unknown reset_mode {self.reset_mode!r}")

    @property
    def hard(self) -> bool:
        return self.reset_mode == RESET_HARD


@dataclass
class LifState:
    """Post-reset membrane potential carried between steps, shape (batch, units)."""

    h: np.ndarray


def heaviside(v):
    """Unit step with the fire-at-threshold convention: 1 iff v >= 0."""
    out = (np.asarray(v, dtype=np.float64) >= 0.0).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def surrogate_grad(v, alpha: float = 2.0):
    """Smooth stand-in for the step's derivative: alpha / (2*(1+(pi*alpha*v/2)^2)).

    Symmetric, peaks at v = 0 with value alpha/2, integrates to 1 over the
    real line for any alpha > 0.
    """
    if not alpha > 0.0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    v = np.asarray(v, dtype=np.float64)
    out = alpha / (2.0 * (1.0 + (math.pi * alpha / 2.0 * v) ** 2))
    return float(out) if out.ndim == 0 else out


def lif_step(i_t: np.ndarray, state: LifState, p: LifParams):
    """One update step; returns (spikes, membrane potential, new state)."""
    i_t = np.asarray(i_t, dtype=np.float64)
    if not np.isfinite(i_t).all():
        raise NumericError("non-finite input current in lif_step")
    if i_t.shape != state.h.shape:
        raise ConfigError(
            f"input shape {i_t.shape} does not match state shape {state.h.shape}"
        )
    u = p.eta * state.h + i_t
    s = heaviside(u - p.v_th)
    if p.hard:
        h = u * (1.0 - s) + p.v_reset * s
    else:
        h = u - p.v_th * s
    return s, u, LifState(h)


def lif_forward(i_seq: np.ndarray, p: LifParams):
    """Run the neuron over a (time, batch, units) current tensor from h = 0.

    Returns the spike raster and the membrane-potential trace, both shaped
    like the input. Equivalent to folding lif_step over the time axis.
    """
    i_seq = np.ascontiguousarray(i_seq, dtype=np.float64)
    if i_seq.ndim != 3:
        raise ConfigError(f"expected a (time, batch, units) tensor, got ndim={i_seq.ndim}")
    if i_seq.shape[0] < 1:
        raise ConfigError("time axis must have at least one step")
    if not np.isfinite(i_seq).all():
        raise NumericError("non-finite input current in lif_forward")
    return _kernels.lif_scan(i_seq, p.eta, p.v_th, p.v_reset, p.hard)
