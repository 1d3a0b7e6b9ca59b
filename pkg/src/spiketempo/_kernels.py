"""Hot numeric kernels: membrane-potential scans over the time axis.

The recurrences here cannot be vectorized over time, so they dominate the
runtime of forward and backward passes. When numba is importable (and not
disabled via the ``SPIKETEMPO_NUMBA`` environment variable, see
:func:`backend`), each kernel is JIT-compiled from an explicit-loop twin;
otherwise the pure-numpy per-step implementations below are used.
``benchmarks/bench_kernels.py`` compares both paths.

All kernels expect C-contiguous float64 arrays shaped (time, batch, units).
"""

from __future__ import annotations

import math
import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("SPIKETEMPO_NUMBA", "1").strip().lower()
    return flag not in {"0", "false", "off", "no"}


# --------------------------------------------------------------------------
# pure-numpy fallbacks (vectorized over (batch, units) per time step)
# --------------------------------------------------------------------------

def lif_scan_numpy(i_seq, eta, v_th, v_reset, hard):
    """Spiking scan: u[t] = eta*h[t-1] + i[t], fire when u - v_th >= 0."""
    t_len = i_seq.shape[0]
    spikes = np.zeros_like(i_seq)
    u_trace = np.empty_like(i_seq)
    h = np.zeros(i_seq.shape[1:], dtype=i_seq.dtype)
    for t in range(t_len):
        u = eta * h + i_seq[t]
        s = (u - v_th >= 0.0).astype(i_seq.dtype)
        u_trace[t] = u
        spikes[t] = s
        if hard:
            h = u * (1.0 - s) + v_reset * s
        else:
            h = u - v_th * s
    return spikes, u_trace


def lif_scan_soft_numpy(i_seq, eta, v_th, v_reset, hard, alpha):
    """Smoothed scan: the firing decision is sigmoid(alpha*(u - v_th))."""
    t_len = i_seq.shape[0]
    spikes = np.empty_like(i_seq)
    u_trace = np.empty_like(i_seq)
    h = np.zeros(i_seq.shape[1:], dtype=i_seq.dtype)
    for t in range(t_len):
        u = eta * h + i_seq[t]
        s = 1.0 / (1.0 + np.exp(-alpha * (u - v_th)))
        u_trace[t] = u
        spikes[t] = s
        if hard:
            h = u * (1.0 - s) + v_reset * s
        else:
            h = u - v_th * s
    return spikes, u_trace


def lif_backward_numpy(g_spikes, u_trace, spikes, eta, v_th, v_reset, hard, alpha):
    """Reverse scan for the spiking forward.

    The step nonlinearity gets the scaled-arctangent surrogate derivative;
    the post-spike state update treats the emitted spike as a constant, so
    a hard reset passes gradient through u only where no spike occurred.
    """
    t_len = g_spikes.shape[0]
    g_input = np.empty_like(g_spikes)
    g_h = np.zeros(g_spikes.shape[1:], dtype=g_spikes.dtype)
    for t in range(t_len - 1, -1, -1):
        x = u_trace[t] - v_th
        sg = alpha / (2.0 * (1.0 + (math.pi * alpha / 2.0 * x) ** 2))
        if hard:
            du = 1.0 - spikes[t]
        else:
            du = 1.0
        g_u = g_spikes[t] * sg + g_h * du
        g_input[t] = g_u
        g_h = eta * g_u
    return g_input


def lif_backward_soft_numpy(g_spikes, u_trace, spikes, eta, v_th, v_reset, hard, alpha):
    """Exact reverse scan for the sigmoid forward (gradient verification)."""
    t_len = g_spikes.shape[0]
    g_input = np.empty_like(g_spikes)
    g_h = np.zeros(g_spikes.shape[1:], dtype=g_spikes.dtype)
    for t in range(t_len - 1, -1, -1):
        sp = alpha * spikes[t] * (1.0 - spikes[t])
        if hard:
            du = (1.0 - spikes[t]) + (v_reset - u_trace[t]) * sp
        else:
            du = 1.0 - v_th * sp
        g_u = g_spikes[t] * sp + g_h * du
        g_input[t] = g_u
        g_h = eta * g_u
    return g_input


def leaky_scan_numpy(c_seq, eta):
    """Non-firing integrator: m[t] = eta*m[t-1] + c[t]."""
    t_len = c_seq.shape[0]
    m_trace = np.empty_like(c_seq)
    m = np.zeros(c_seq.shape[1:], dtype=c_seq.dtype)
    for t in range(t_len):
        m = eta * m + c_seq[t]
        m_trace[t] = m
    return m_trace


def leaky_backward_numpy(g_m, eta):
    """Reverse of leaky_scan: g_c[t] = g_m[t] + eta*g_c[t+1]."""
    t_len = g_m.shape[0]
    g_c = np.empty_like(g_m)
    acc = np.zeros(g_m.shape[1:], dtype=g_m.dtype)
    for t in range(t_len - 1, -1, -1):
        acc = g_m[t] + eta * acc
        g_c[t] = acc
    return g_c


# --------------------------------------------------------------------------
# numba twins
# --------------------------------------------------------------------------

NUMBA_AVAILABLE = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - depends on environment
        NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def lif_scan_numba(i_seq, eta, v_th, v_reset, hard):
        t_len, batch, units = i_seq.shape
        spikes = np.zeros((t_len, batch, units))
        u_trace = np.empty((t_len, batch, units))
        h = np.zeros((batch, units))
        for t in range(t_len):
            for b in range(batch):
                for n in range(units):
                    u = eta * h[b, n] + i_seq[t, b, n]
                    u_trace[t, b, n] = u
                    if u - v_th >= 0.0:
                        spikes[t, b, n] = 1.0
                        h[b, n] = v_reset if hard else u - v_th
                    else:
                        h[b, n] = u
        return spikes, u_trace

    @njit(cache=True)
    def lif_scan_soft_numba(i_seq, eta, v_th, v_reset, hard, alpha):
        t_len, batch, units = i_seq.shape
        spikes = np.empty((t_len, batch, units))
        u_trace = np.empty((t_len, batch, units))
        h = np.zeros((batch, units))
        for t in range(t_len):
            for b in range(batch):
                for n in range(units):
                    u = eta * h[b, n] + i_seq[t, b, n]
                    s = 1.0 / (1.0 + math.exp(-alpha * (u - v_th)))
                    u_trace[t, b, n] = u
                    spikes[t, b, n] = s
                    if hard:
                        h[b, n] = u * (1.0 - s) + v_reset * s
                    else:
                        h[b, n] = u - v_th * s
        return spikes, u_trace

    @njit(cache=True)
    def lif_backward_numba(g_spikes, u_trace, spikes, eta, v_th, v_reset, hard, alpha):
        t_len, batch, units = g_spikes.shape
        g_input = np.empty((t_len, batch, units))
        g_h = np.zeros((batch, units))
        for t in range(t_len - 1, -1, -1):
            for b in range(batch):
                for n in range(units):
                    x = u_trace[t, b, n] - v_th
                    sg = alpha / (2.0 * (1.0 + (math.pi * alpha / 2.0 * x) ** 2))
                    if hard:
                        du = 1.0 - spikes[t, b, n]
                    else:
                        du = 1.0
                    g_u = g_spikes[t, b, n] * sg + g_h[b, n] * du
                    g_input[t, b, n] = g_u
                    g_h[b, n] = eta * g_u
        return g_input

    @njit(cache=True)
    def lif_backward_soft_numba(g_spikes, u_trace, spikes, eta, v_th, v_reset, hard, alpha):
        t_len, batch, units = g_spikes.shape
        g_input = np.empty((t_len, batch, units))
        g_h = np.zeros((batch, units))
        for t in range(t_len - 1, -1, -1):
            for b in range(batch):
                for n in range(units):
                    s = spikes[t, b, n]
                    sp = alpha * s * (1.0 - s)
                    if hard:
                        du = (1.0 - s) + (v_reset - u_trace[t, b, n]) * sp
                    else:
                        du = 1.0 - v_th * sp
                    g_u = g_spikes[t, b, n] * sp + g_h[b, n] * du
                    g_input[t, b, n] = g_u
                    g_h[b, n] = eta * g_u
        return g_input

    @njit(cache=True)
    def leaky_scan_numba(c_seq, eta):
        t_len, batch, units = c_seq.shape
        m_trace = np.empty((t_len, batch, units))
        m = np.zeros((batch, units))
        for t in range(t_len):
            for b in range(batch):
                for n in range(units):
                    m[b, n] = eta * m[b, n] + c_seq[t, b, n]
                    m_trace[t, b, n] = m[b, n]
        return m_trace

    @njit(cache=True)
    def leaky_backward_numba(g_m, eta):
        t_len, batch, units = g_m.shape
        g_c = np.empty((t_len, batch, units))
        acc = np.zeros((batch, units))
        for t in range(t_len - 1, -1, -1):
            for b in range(batch):
                for n in range(units):
                    acc[b, n] = g_m[t, b, n] + eta * acc[b, n]
                    g_c[t, b, n] = acc[b, n]
        return g_c

    lif_scan = lif_scan_numba
    lif_scan_soft = lif_scan_soft_numba
    lif_backward = lif_backward_numba
    lif_backward_soft = lif_backward_soft_numba
    leaky_scan = leaky_scan_numba
    leaky_backward = leaky_backward_numba
else:
    lif_scan_numba = None
    lif_scan_soft_numba = None
    lif_backward_numba = None
    lif_backward_soft_numba = None
    leaky_scan_numba = None
    leaky_backward_numba = None

    lif_scan = lif_scan_numpy
    lif_scan_soft = lif_scan_soft_numpy
    lif_backward = lif_backward_numpy
    lif_backward_soft = lif_backward_soft_numpy
    leaky_scan = leaky_scan_numpy
    leaky_backward = leaky_backward_numpy


def backend() -> str:
    """Which kernel path is active: "numba" or "numpy"."""
    return "numba" if NUMBA_AVAILABLE else "numpy"
