"""Delay-window convolution modules, normalization, network assembly, and IO.

A hidden module is delay_conv -> batchnorm -> LIF -> dropout. The
convolution realizes per-synapse transmission delays as dense tap weights
over a window of 0..D steps and lengthens the time axis from T to T+D
(full zero-padded convolution); the residual path exists precisely because
module input and output lengths differ. Flagged modules add their own input
back after right alignment; grouping operators can be inserted after any
module. The output layer is a delay convolution into a non-firing leaky
integrator whose time-mean is the logit vector; it carries no
normalization or dropout.

File formats owned here:

* Network spec: JSON with keys ``inputs``, ``classes``,
  ``hidden: [{size, max_delay, dropout, lif: {eta, v_th, reset}}]``,
  ``nar: [bool, ...]``, ``tr: {variant, len, stride, after}`` (object, list
  of objects, or null), ``readout: {eta}``. Optional keys: per-hidden
  ``kc``, per-lif ``v_reset`` and ``alpha``, readout ``max_delay``.
* Checkpoint: magic ``STNET1``, uint32 LE byte length of the UTF-8 JSON
  spec document, the document, then per-layer float64 LE blobs in declared
  order: for each hidden module conv.weights, conv.bias, bn.gamma, bn.beta,
  bn.running_mean, bn.running_var; then readout weights and bias.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, temporal
from .errors import ConfigError, IngestionError, NumericError, ShapeError
from .lif import LifParams
from .raster import SpikeRaster

NET_MAGIC = b"STNET1"


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------

@dataclass
class DelayLayer:
    """Dense tap weights (n_out, n_in, D+1) over delays 0..D plus a bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3:
            raise ShapeError(f"weights must be (n_out, n_in, taps), got ndim={self.weights.ndim}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match n_out={self.weights.shape[0]}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericError("delay layer weights must be finite")

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def taps(self) -> int:
        return self.weights.shape[2]

    @property
    def max_delay(self) -> int:
        return self.weights.shape[2] - 1


def delay_conv_forward(x, layer: DelayLayer) -> np.ndarray:
    """y[t] = bias + sum_d W[:, :, d] . x[t-d], x taken as 0 outside [0, T).

    Output time length is T + D: every tap of every input step lands
    somewhere, which is what stretches the time axis.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (time, batch, units) input, got ndim={x.ndim}")
    t_len, batch, n_in = x.shape
    if n_in != layer.n_in:
        raise ShapeError(f"input has {n_in} units, layer expects {layer.n_in}")
    out = np.zeros((t_len + layer.max_delay, batch, layer.n_out), dtype=np.float64)
    for d in range(layer.taps):
        out[d : d + t_len] += x @ layer.weights[:, :, d].T
    out += layer.bias
    return out


def delay_conv_backward(x, layer: DelayLayer, g_out):
    """Gradients of delay_conv_forward: returns (g_x, g_weights, g_bias)."""
    t_len = x.shape[0]
    g_x = np.zeros_like(x)
    g_w = np.zeros_like(layer.weights)
    x2 = x.reshape(-1, layer.n_in)
    for d in range(layer.taps):
        seg = g_out[d : d + t_len]
        g_w[:, :, d] = seg.reshape(-1, layer.n_out).T @ x2
        g_x += seg @ layer.weights[:, :, d]
    g_b = g_out.sum(axis=(0, 1))
    return g_x, g_w, g_b


@dataclass
class BatchNormParams:
    """Per-unit affine normalization state.

    Statistics are taken jointly over the (time, batch) axes; variances are
    biased (divide by the element count) both for normalization and for the
    running estimates, keeping training and inference consistent. Running
    stats move by ``new = (1 - momentum) * old + momentum * batch``.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.running_mean = np.asarray(self.running_mean, dtype=np.float64)
        self.running_var = np.asarray(self.running_var, dtype=np.float64)
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError(f"momentum must be in (0, 1), got {self.momentum}")
        if (self.running_var < 0).any():
            raise ConfigError("running variance must be >= 0")

    @property
    def size(self) -> int:
        return self.gamma.shape[0]


def bn_init(n: int, epsilon: float = 1e-5, momentum: float = 0.1) -> BatchNormParams:
    return BatchNormParams(np.ones(n), np.zeros(n), np.zeros(n), np.ones(n), epsilon, momentum)


def _batchnorm(x, params: BatchNormParams, training: bool, update_running: bool = True):
    t_len, batch, units = x.shape
    if units != params.size:
        raise ShapeError(f"input has {units} units, normalization expects {params.size}")
    if training:
        if t_len * batch < 2:
            raise ConfigError("training-mode normalization needs at least 2 elements per unit")
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        if update_running:
            m = params.momentum
            params.running_mean[:] = (1.0 - m) * params.running_mean + m * mean
            params.running_var[:] = (1.0 - m) * params.running_var + m * var
    else:
        mean = params.running_mean
        var = params.running_var
    inv = 1.0 / np.sqrt(var + params.epsilon)
    x_hat = (x - mean) * inv
    y = params.gamma * x_hat + params.beta
    return y, (x_hat, inv, training)


def batchnorm_forward(x, params: BatchNormParams, training: bool) -> np.ndarray:
    """Normalize per unit over (time, batch); training mode updates running stats."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (time, batch, units) input, got ndim={x.ndim}")
    return _batchnorm(x, params, training)[0]


def _batchnorm_backward(g, cache, params: BatchNormParams):
    x_hat, inv, training = cache
    g_gamma = (g * x_hat).sum(axis=(0, 1))
    g_beta = g.sum(axis=(0, 1))
    g_hat = g * params.gamma
    if training:
        g_x = inv * (
            g_hat - g_hat.mean(axis=(0, 1)) - x_hat * (g_hat * x_hat).mean(axis=(0, 1))
        )
    else:
        g_x = g_hat * inv
    return g_x, g_gamma, g_beta


def dropout_forward(x, p: float, seed: int, training: bool) -> np.ndarray:
    """Zero elements with probability p and rescale survivors by 1/(1-p).

    Identity at inference or when p == 0. Deterministic per seed.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x, dtype=np.float64)
    if not training or p == 0.0:
        return x
    rng = np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= p).astype(np.float64)
    return x * mask / (1.0 - p)


def _dropout_mask(shape, p: float, rng) -> np.ndarray:
    """Pre-scaled multiplicative mask for the training path."""
    return (rng.random(shape) >= p).astype(np.float64) / (1.0 - p)


# --------------------------------------------------------------------------
# network description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HiddenSpec:
    """One hidden module: output size, delay window, dropout, neuron constants."""

    size: int
    max_delay: int
    dropout: float
    lif: LifParams
    kc: int | None = None  # positioned-tap request; mapped to dense with a warning


OP_POOL = "pool"
_PLACEMENT_OPS = (temporal.VARIANT_OVERLAP, temporal.VARIANT_NO_OVERLAP, OP_POOL)


@dataclass(frozen=True)
class TrPlacement:
    """A grouping operator inserted after hidden module ``after`` (0-based)."""

    op: str
    length: int
    stride: int
    after: int

    def __post_init__(self):
        if self.op not in _PLACEMENT_OPS:
            raise ConfigError(f"unknown grouping op {self.op!r}")
        if self.length < 1 or self.stride < 1:
            raise ConfigError("grouping length and stride must be >= 1")
        if self.after < 0:
            raise ConfigError("placement index must be >= 0")


@dataclass
class NetworkSpec:
    """Ordered description of the network; see module docstring for the file form."""

    n_inputs: int
    n_classes: int
    hidden: list
    nar: list
    tr: list = field(default_factory=list)
    readout_eta: float = 0.9
    readout_max_delay: int = 0

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_classes < 1:
            raise ConfigError("inputs and classes must be >= 1")
        if not self.hidden:
            raise ConfigError("at least one hidden module is required")
        if len(self.nar) != len(self.hidden):
            raise ConfigError(
                f"need one residual flag per hidden module: {len(self.nar)} != {len(self.hidden)}"
            )
        for h in self.hidden:
            if h.size < 1:
                raise ConfigError("hidden size must be >= 1")
            if h.max_delay < 0:
                raise ConfigError("max_delay must be >= 0")
            if not 0.0 <= h.dropout < 1.0:
                raise ConfigError(f"dropout must be in [0, 1), got {h.dropout}")
        for placement in self.tr:
            if placement.after >= len(self.hidden):
                raise ConfigError(
                    f"placement after module {placement.after} but only "
                    f"{len(self.hidden)} hidden modules exist"
                )
        if not 0.0 < self.readout_eta <= 1.0:
            raise ConfigError(f"readout eta must be in (0, 1], got {self.readout_eta}")
        if self.readout_max_delay < 0:
            raise ConfigError("readout max_delay must be >= 0")


@dataclass
class HiddenModule:
    conv: DelayLayer
    bn: BatchNormParams
    lif: LifParams
    dropout: float
    nar: bool


@dataclass
class Network:
    spec: NetworkSpec
    modules: list
    readout: DelayLayer
    readout_eta: float


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    """Assemble and initialize a network from its spec.

    Weights draw from U(-a, a) with a = sqrt(1 / (n_in * taps)), which keeps
    output variance roughly independent of the tap count; biases start at 0.
    A residual flag on a module whose input and output widths differ is a
    configuration error, since the two branches must share the unit axis.
    """
    rng = np.random.default_rng(seed)
    modules = []
    n_in = spec.n_inputs
    for i, h in enumerate(spec.hidden):
        if h.kc is not None:
            warnings.warn(
                f"hidden module {i}: positioned-tap mode kc({h.kc}) is realized as "
                "dense taps over the delay window",
                UserWarning,
                stacklevel=2,
            )
        if spec.nar[i] and h.size != n_in:
            raise ConfigError(
                f"hidden module {i}: residual flag requires matching widths, "
                f"got {n_in} -> {h.size}"
            )
        taps = h.max_delay + 1
        bound = np.sqrt(1.0 / (n_in * taps))
        conv = DelayLayer(rng.uniform(-bound, bound, (h.size, n_in, taps)), np.zeros(h.size))
        modules.append(HiddenModule(conv, bn_init(h.size), h.lif, h.dropout, spec.nar[i]))
        n_in = h.size
    taps_r = spec.readout_max_delay + 1
    bound = np.sqrt(1.0 / (n_in * taps_r))
    readout = DelayLayer(
        rng.uniform(-bound, bound, (spec.n_classes, n_in, taps_r)), np.zeros(spec.n_classes)
    )
    return Network(spec, modules, readout, spec.readout_eta)


def named_parameters(net: Network):
    """Trainable arrays in a stable order (live references)."""
    out = []
    for i, m in enumerate(net.modules):
        out.append((f"hidden{i}.conv.weights", m.conv.weights))
        out.append((f"hidden{i}.conv.bias", m.conv.bias))
        out.append((f"hidden{i}.bn.gamma", m.bn.gamma))
        out.append((f"hidden{i}.bn.beta", m.bn.beta))
    out.append(("readout.weights", net.readout.weights))
    out.append(("readout.bias", net.readout.bias))
    return out


def count_parameters(net: Network) -> int:
    return sum(arr.size for _, arr in named_parameters(net))


def state_arrays(net: Network):
    """All persisted arrays in checkpoint order (live references)."""
    out = []
    for i, m in enumerate(net.modules):
        out.append((f"hidden{i}.conv.weights", m.conv.weights))
        out.append((f"hidden{i}.conv.bias", m.conv.bias))
        out.append((f"hidden{i}.bn.gamma", m.bn.gamma))
        out.append((f"hidden{i}.bn.beta", m.bn.beta))
        out.append((f"hidden{i}.bn.running_mean", m.bn.running_mean))
        out.append((f"hidden{i}.bn.running_var", m.bn.running_var))
    out.append(("readout.weights", net.readout.weights))
    out.append(("readout.bias", net.readout.bias))
    return out


# --------------------------------------------------------------------------
# forward pass with activation record and optional tape
# --------------------------------------------------------------------------

ACT_SPIKE = "spike"
ACT_SOFT = "soft"
ACT_LINEAR = "linear"


@dataclass
class LayerRecord:
    """Spike counts, value sums, and time lengths observed at one layer."""

    name: str
    kind: str  # conv | bn | lif | dropout | nar | group | integrator
    t_in: int
    t_out: int
    batch: int
    units: int
    in_value_sum: float
    in_spike_count: int
    out_value_sum: float
    out_spike_count: int
    n_out: int = 0
    taps: int = 0
    bias_nonzero: bool = False


@dataclass
class ActivationRecord:
    """Per-layer activity captured during one forward pass."""

    layers: list
    batch: int
    t_input: int
    n_inputs: int

    def find(self, name: str) -> LayerRecord:
        for entry in self.layers:
            if entry.name == name:
                return entry
        raise KeyError(name)


@dataclass
class _ModuleTape:
    index: int
    x_in: np.ndarray
    bn_cache: tuple
    u_trace: np.ndarray
    s_trace: np.ndarray
    drop_mask: np.ndarray | None
    nar: bool


@dataclass
class _GroupTape:
    name: str
    idx: np.ndarray
    in_shape: tuple


@dataclass
class _ReadoutTape:
    x_in: np.ndarray
    t_out: int


@dataclass
class ForwardResult:
    logits: np.ndarray
    record: ActivationRecord | None
    tape: list | None


def _stats(v):
    return float(v.sum()), int(np.count_nonzero(v))


def forward_pass(
    net: Network,
    x,
    *,
    training: bool = False,
    seed: int = 0,
    activation: str = ACT_SPIKE,
    with_tape: bool = False,
    with_record: bool = True,
    update_running: bool = True,
) -> ForwardResult:
    """Run the network; optionally collect the activation record and tape.

    ``activation`` selects the neuron nonlinearity: "spike" is the normal
    step function, "soft" replaces it with sigmoid(alpha*(u - v_th)) for
    gradient verification, "linear" passes the normalized current through
    unchanged (verification of the purely affine pipeline).
    """
    if isinstance(x, SpikeRaster):
        x = x.values
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (time, batch, units) input, got ndim={x.ndim}")
    if x.shape[2] != net.spec.n_inputs:
        raise ShapeError(f"input has {x.shape[2]} units, network expects {net.spec.n_inputs}")
    if not np.isfinite(x).all():
        raise NumericError("non-finite network input")
    if activation not in (ACT_SPIKE, ACT_SOFT, ACT_LINEAR):
        raise ConfigError(f"unknown activation {activation!r}")

    rng = np.random.default_rng(seed)
    records = [] if with_record else None
    tape = [] if with_tape else None
    placements = {}
    for k, placement in enumerate(net.spec.tr):
        placements.setdefault(placement.after, []).append((k, placement))

    def note(name, kind, x_in, x_out, **extra):
        if records is None:
            return
        ivs, isc = _stats(x_in)
        ovs, osc = _stats(x_out)
        records.append(
            LayerRecord(
                name=name,
                kind=kind,
                t_in=x_in.shape[0],
                t_out=x_out.shape[0],
                batch=x_out.shape[1],
                units=x_out.shape[2],
                in_value_sum=ivs,
                in_spike_count=isc,
                out_value_sum=ovs,
                out_spike_count=osc,
                **extra,
            )
        )

    cur = x
    for i, mod in enumerate(net.modules):
        x_in = cur
        c = delay_conv_forward(x_in, mod.conv)
        note(
            f"hidden{i}.conv", "conv", x_in, c,
            n_out=mod.conv.n_out, taps=mod.conv.taps,
            bias_nonzero=bool(np.any(mod.conv.bias != 0.0)),
        )
        n_, bn_cache = _batchnorm(c, mod.bn, training, update_running)
        note(f"hidden{i}.bn", "bn", c, n_)
        if activation == ACT_SPIKE:
            s, u = _kernels.lif_scan(
                np.ascontiguousarray(n_), mod.lif.eta, mod.lif.v_th, mod.lif.v_reset, mod.lif.hard
            )
        elif activation == ACT_SOFT:
            s, u = _kernels.lif_scan_soft(
                np.ascontiguousarray(n_), mod.lif.eta, mod.lif.v_th, mod.lif.v_reset,
                mod.lif.hard, mod.lif.alpha,
            )
        else:
            s, u = n_, n_
        note(f"hidden{i}.lif", "lif", n_, s)
        if training and mod.dropout > 0.0:
            mask = _dropout_mask(s.shape, mod.dropout, rng)
            o = s * mask
        else:
            mask = None
            o = s
        note(f"hidden{i}.dropout", "dropout", s, o)
        if mod.nar:
            xa, oa = temporal.nar_align(x_in, o)
            y = oa + xa
            note(f"hidden{i}.nar", "nar", o, y)
        else:
            y = o
        if tape is not None:
            tape.append(_ModuleTape(i, x_in, bn_cache, u, s, mask, mod.nar))
        for k, placement in placements.get(i, []):
            name = f"group{k}.{placement.op}"
            y_in = y
            y, idx = temporal.grouped_forward_tape(y_in, placement.op, placement.length, placement.stride)
            note(name, "group", y_in, y)
            if tape is not None:
                tape.append(_GroupTape(name, idx, y_in.shape))
        cur = y

    c_out = delay_conv_forward(cur, net.readout)
    note(
        "readout.conv", "conv", cur, c_out,
        n_out=net.readout.n_out, taps=net.readout.taps,
        bias_nonzero=bool(np.any(net.readout.bias != 0.0)),
    )
    m_trace = _kernels.leaky_scan(np.ascontiguousarray(c_out), net.readout_eta)
    note("readout.integrator", "integrator", c_out, m_trace)
    logits = m_trace.mean(axis=0)
    if tape is not None:
        tape.append(_ReadoutTape(cur, m_trace.shape[0]))

    record = None
    if with_record:
        record = ActivationRecord(records, x.shape[1], x.shape[0], x.shape[2])
    return ForwardResult(logits, record, tape)


def network_forward(net: Network, raster, training: bool = False, seed: int = 0):
    """Forward pass returning (logits, activation record).

    Deterministic given (seed, training); ``seed`` drives only dropout.
    """
    result = forward_pass(net, raster, training=training, seed=seed)
    return result.logits, result.record


# --------------------------------------------------------------------------
# spec file and checkpoint IO
# --------------------------------------------------------------------------

_TOP_KEYS = {"inputs", "classes", "hidden", "nar", "tr", "readout"}
_HIDDEN_KEYS = {"size", "max_delay", "dropout", "lif", "kc"}
_LIF_KEYS = {"eta", "v_th", "reset", "v_reset", "alpha"}
_TR_KEYS = {"variant", "len", "stride", "after"}
_READOUT_KEYS = {"eta", "max_delay"}


def network_spec_to_dict(spec: NetworkSpec) -> dict:
    doc = {
        "inputs": spec.n_inputs,
        "classes": spec.n_classes,
        "hidden": [],
        "nar": [bool(f) for f in spec.nar],
        "readout": {"eta": spec.readout_eta, "max_delay": spec.readout_max_delay},
    }
    for h in spec.hidden:
        entry = {
            "size": h.size,
            "max_delay": h.max_delay,
            "dropout": h.dropout,
            "lif": {
                "eta": h.lif.eta,
                "v_th": h.lif.v_th,
                "reset": h.lif.reset_mode,
                "v_reset": h.lif.v_reset,
                "alpha": h.lif.alpha,
            },
        }
        if h.kc is not None:
            entry["kc"] = h.kc
        doc["hidden"].append(entry)
    placements = [
        {"variant": p.op, "len": p.length, "stride": p.stride, "after": p.after}
        for p in spec.tr
    ]
    if not placements:
        doc["tr"] = None
    elif len(placements) == 1:
        doc["tr"] = placements[0]
    else:
        doc["tr"] = placements
    return doc


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def network_spec_from_dict(doc: dict) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise ConfigError("network spec document must be an object")
    _check_keys(doc, _TOP_KEYS, "network spec")
    try:
        n_inputs = int(doc["inputs"])
        n_classes = int(doc["classes"])
        hidden_docs = doc["hidden"]
    except KeyError as e:
        raise ConfigError(f"network spec missing key {e.args[0]!r}") from e
    if not isinstance(hidden_docs, list):
        raise ConfigError("'hidden' must be a list of module objects")
    hidden = []
    for i, h in enumerate(hidden_docs):
        _check_keys(h, _HIDDEN_KEYS, f"hidden[{i}]")
        lif_doc = h.get("lif", {})
        _check_keys(lif_doc, _LIF_KEYS, f"hidden[{i}].lif")
        lif = LifParams(
            eta=float(lif_doc.get("eta", 0.9)),
            v_th=float(lif_doc.get("v_th", 1.0)),
            v_reset=float(lif_doc.get("v_reset", 0.0)),
            reset_mode=str(lif_doc.get("reset", "hard")),
            alpha=float(lif_doc.get("alpha", 2.0)),
        )
        hidden.append(
            HiddenSpec(
                size=int(h["size"]),
                max_delay=int(h.get("max_delay", 0)),
                dropout=float(h.get("dropout", 0.0)),
                lif=lif,
                kc=None if h.get("kc") is None else int(h["kc"]),
            )
        )
    nar = [bool(f) for f in doc.get("nar", [False] * len(hidden))]
    tr_doc = doc.get("tr")
    if tr_doc is None:
        tr_list = []
    elif isinstance(tr_doc, dict):
        tr_list = [tr_doc]
    elif isinstance(tr_doc, list):
        tr_list = tr_doc
    else:
        raise ConfigError("'tr' must be an object, a list of objects, or null")
    placements = []
    for entry in tr_list:
        _check_keys(entry, _TR_KEYS, "tr")
        placements.append(
            TrPlacement(
                op=str(entry["variant"]),
                length=int(entry["len"]),
                stride=int(entry.get("stride", 1)),
                after=int(entry.get("after", len(hidden) - 1)),
            )
        )
    readout_doc = doc.get("readout", {})
    _check_keys(readout_doc, _READOUT_KEYS, "readout")
    return NetworkSpec(
        n_inputs=n_inputs,
        n_classes=n_classes,
        hidden=hidden,
        nar=nar,
        tr=placements,
        readout_eta=float(readout_doc.get("eta", 0.9)),
        readout_max_delay=int(readout_doc.get("max_delay", 0)),
    )


def save_network_spec(path, spec: NetworkSpec) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network_spec_to_dict(spec), f, indent=2, sort_keys=True)
        f.write("\n")


def load_network_spec(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise IngestionError(f"{path}: invalid JSON ({e.msg})") from e
    return network_spec_from_dict(doc)


def save_checkpoint(path, net: Network) -> None:
    doc = json.dumps(network_spec_to_dict(net.spec), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(NET_MAGIC)
        f.write(struct.pack("<I", len(doc)))
        f.write(doc)
        for _, arr in state_arrays(net):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        magic = f.read(len(NET_MAGIC))
        if magic != NET_MAGIC:
            raise IngestionError(f"{path}: bad magic {magic!r}, expected {NET_MAGIC!r}")
        raw = f.read(4)
        if len(raw) != 4:
            raise IngestionError(f"{path}: truncated spec header")
        (doc_len,) = struct.unpack("<I", raw)
        doc = f.read(doc_len)
        if len(doc) != doc_len:
            raise IngestionError(f"{path}: truncated spec document")
        spec = network_spec_from_dict(json.loads(doc.decode("utf-8")))
        net = build_network(spec, seed=0)
        for name, arr in state_arrays(net):
            blob = f.read(arr.size * 8)
            if len(blob) != arr.size * 8:
                raise IngestionError(f"{path}: truncated weight blob for {name}")
            arr[...] = np.frombuffer(blob, dtype="<f8").reshape(arr.shape)
        if f.read(1):
            raise IngestionError(f"{path}: trailing bytes after weight blobs")
    return net


def checkpoint_blob_bytes(net: Network) -> int:
    """Byte length of the weight-blob section of a checkpoint."""
    return sum(arr.size * 8 for _, arr in state_arrays(net))
