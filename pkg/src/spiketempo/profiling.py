"""Energy accounting and the fixed-iteration throughput protocol.

Energy model: spike-gated synaptic work costs one accumulate per activated
synapse (0.9 pJ each); dense arithmetic that runs regardless of spikes
costs one multiply-accumulate per element (4.6 pJ each). An activated
synapse is (input spike value) x (downstream tap fan-out); a strong spike
of value 2 therefore counts twice. Dense work covers unfolded
normalization (2 FLOPs per element; the default "folded" accounting merges
the affine into the convolution, which is exact at inference, and charges
nothing), the readout integrator (1 per element per step), and bias
additions over the full output length when the bias vector is nonzero.

Throughput: one untimed warm-up forward, then a fixed number of timed
forwards of a synthetic batch on a monotonic clock; the figure is
samples per second. Single-threaded by default so numbers compare across
machines; ``parallel=True`` lifts the cap and is recorded in the report.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, ShapeError
from .network import ActivationRecord, Network, count_parameters, forward_pass

AC_ENERGY_PJ = 0.9
MAC_ENERGY_PJ = 4.6


@dataclass
class LayerEnergy:
    name: str
    ac_ops: int
    mac_flops: int

    @property
    def energy_pj(self) -> float:
        return self.ac_ops * AC_ENERGY_PJ + self.mac_flops * MAC_ENERGY_PJ


@dataclass
class EnergyReport:
    ac_ops: int
    mac_flops: int
    layers: list
    fold_bn: bool

    @property
    def energy_pj(self) -> float:
        return self.ac_ops * AC_ENERGY_PJ + self.mac_flops * MAC_ENERGY_PJ


def _conv_layers(net: Network):
    layers = [(f"hidden{i}.conv", m.conv) for i, m in enumerate(net.modules)]
    layers.append(("readout.conv", net.readout))
    return layers


def _match_conv_entries(record: ActivationRecord, net: Network):
    entries = [e for e in record.layers if e.kind == "conv"]
    layers = _conv_layers(net)
    if len(entries) != len(layers):
        raise ConfigError(
            f"record has {len(entries)} convolution entries, network has {len(layers)}"
        )
    for entry, (name, layer) in zip(entries, layers):
        if entry.name != name or entry.n_out != layer.n_out or entry.taps != layer.taps:
            raise ConfigError(f"record entry {entry.name!r} does not match layer {name!r}")
    return list(zip(entries, layers))


def count_ac_ops(record: ActivationRecord, net: Network) -> int:
    """Accumulates: sum over convolutions of input spike value x n_out x taps."""
    total = 0
    for entry, (_, layer) in _match_conv_entries(record, net):
        total += int(round(entry.in_value_sum)) * layer.n_out * layer.taps
    return total


def count_mac_flops(net: Network, record: ActivationRecord, fold_bn: bool = True) -> int:
    """Dense multiply-accumulates: normalization (if unfolded), integrator, biases."""
    _match_conv_entries(record, net)  # validates the pairing
    total = 0
    for entry in record.layers:
        if entry.kind == "bn" and not fold_bn:
            total += 2 * entry.t_out * entry.batch * entry.units
        elif entry.kind == "integrator":
            total += entry.t_out * entry.batch * entry.units
        elif entry.kind == "conv" and entry.bias_nonzero:
            total += entry.t_out * entry.batch * entry.n_out
    return total


def energy(record: ActivationRecord, net: Network, fold_bn: bool = True) -> EnergyReport:
    """Per-layer and total energy; totals satisfy ac*0.9 + mac*4.6 exactly."""
    pairs = _match_conv_entries(record, net)
    per_layer = []
    conv_ac = {}
    for entry, (_, layer) in pairs:
        conv_ac[entry.name] = int(round(entry.in_value_sum)) * layer.n_out * layer.taps
    for entry in record.layers:
        ac = conv_ac.get(entry.name, 0)
        mac = 0
        if entry.kind == "bn" and not fold_bn:
            mac = 2 * entry.t_out * entry.batch * entry.units
        elif entry.kind == "integrator":
            mac = entry.t_out * entry.batch * entry.units
        elif entry.kind == "conv" and entry.bias_nonzero:
            mac = entry.t_out * entry.batch * entry.n_out
        if ac or mac or entry.kind in ("conv", "bn", "integrator"):
            per_layer.append(LayerEnergy(entry.name, ac, mac))
    total_ac = sum(l.ac_ops for l in per_layer)
    total_mac = sum(l.mac_flops for l in per_layer)
    return EnergyReport(total_ac, total_mac, per_layer, fold_bn)


@dataclass
class ThroughputReport:
    batch_shape: tuple
    iterations: int
    elapsed_s: float
    parallel: bool

    @property
    def samples_per_second(self) -> float:
        return self.iterations * self.batch_shape[1] / self.elapsed_s


def throughput(
    net: Network,
    batch_shape,
    iterations: int = 1000,
    parallel: bool = False,
    seed: int = 0,
) -> ThroughputReport:
    """Time ``iterations`` forwards of one synthetic batch after a warm-up."""
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    t_len, batch, units = (int(v) for v in batch_shape)
    if units != net.spec.n_inputs:
        raise ShapeError(f"batch has {units} units, network expects {net.spec.n_inputs}")
    rng = np.random.default_rng(seed)
    x = (rng.random((t_len, batch, units)) < 0.5).astype(np.float64)
    limiter = nullcontext() if parallel else threadpool_limits(limits=1)
    with limiter:
        forward_pass(net, x, training=False, with_record=False)  # warm-up
        t0 = time.perf_counter()
        for _ in range(iterations):
            forward_pass(net, x, training=False, with_record=False)
        elapsed = time.perf_counter() - t0
    return ThroughputReport((t_len, batch, units), iterations, elapsed, parallel)


# --------------------------------------------------------------------------
# report formatting
# --------------------------------------------------------------------------

def format_energy_text(report: EnergyReport) -> str:
    rows = [("layer", "AC ops", "MAC FLOPs", "energy(pJ)")]
    for l in report.layers:
        rows.append((l.name, str(l.ac_ops), str(l.mac_flops), f"{l.energy_pj:.1f}"))
    rows.append(("total", str(report.ac_ops), str(report.mac_flops), f"{report.energy_pj:.1f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.append(f"bn_mode={'folded' if report.fold_bn else 'unfolded'}")
    return "\n".join(lines)


def format_energy_kv(report: EnergyReport) -> str:
    lines = [
        f"ac_ops={report.ac_ops}",
        f"mac_flops={report.mac_flops}",
        f"energy_pj={report.energy_pj}",
        f"bn_mode={'folded' if report.fold_bn else 'unfolded'}",
    ]
    for l in report.layers:
        lines.append(f"layer.{l.name}.ac_ops={l.ac_ops}")
        lines.append(f"layer.{l.name}.mac_flops={l.mac_flops}")
        lines.append(f"layer.{l.name}.energy_pj={l.energy_pj}")
    return "\n".join(lines)


def format_throughput_text(report: ThroughputReport) -> str:
    t, b, n = report.batch_shape
    return "\n".join(
        [
            f"batch shape: ({t}, {b}, {n})",
            f"iterations: {report.iterations}",
            f"elapsed(s): {report.elapsed_s:.4f}",
            f"throughput(samples/s): {report.samples_per_second:.2f}",
            f"parallel: {'yes' if report.parallel else 'no'}",
        ]
    )


def format_throughput_kv(report: ThroughputReport) -> str:
    t, b, n = report.batch_shape
    return "\n".join(
        [
            f"t_len={t}",
            f"batch={b}",
            f"units={n}",
            f"iterations={report.iterations}",
            f"elapsed_s={report.elapsed_s}",
            f"samples_per_second={report.samples_per_second:.2f}",
            f"parallel={int(report.parallel)}",
        ]
    )


def format_model_table(rows) -> str:
    """Aligned summary table: params, throughput, consumption, accuracy.

    ``rows`` holds (label, n_params, samples_per_second, energy_pj,
    accuracy) tuples; None cells print as n/a.
    """
    header = ("model", "#Params(M)", "throughput(samples/s)", "consumption(pJ)", "Acc(%)")
    body = [header]
    for label, n_params, sps, pj, acc in rows:
        body.append(
            (
                str(label),
                "n/a" if n_params is None else f"{n_params / 1e6:.3f}",
                "n/a" if sps is None else f"{sps:.2f}",
                "n/a" if pj is None else f"{pj:.1E}",
                "n/a" if acc is None else f"{100.0 * acc:.2f}",
            )
        )
    widths = [max(len(r[c]) for r in body) for c in range(5)]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in body
    )


def model_row(net: Network, accuracy=None, throughput_report=None, energy_report=None,
              label: str = "network"):
    """Convenience tuple for format_model_table."""
    return (
        label,
        count_parameters(net),
        None if throughput_report is None else throughput_report.samples_per_second,
        None if energy_report is None else energy_report.energy_pj,
        accuracy,
    )
