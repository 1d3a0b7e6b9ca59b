"""Reverse-mode training over the fixed module graph.

Backpropagation through time is hand-rolled: every operator in the forward
pass leaves a tape entry, and this module walks the tape backwards. The
step nonlinearity uses the scaled-arctangent surrogate derivative; with the
smooth ("soft") forward enabled, the backward pass instead differentiates
the sigmoid graph exactly, which is what the finite-difference verifier
checks against. Gradient routing through a grouping operator follows the
first maximal element of each window; the residual path splits the
incoming gradient between the module branch (full length) and the identity
branch (its own, shorter length).
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, temporal
from .errors import ConfigError, NumericError, TrainingDiverged
from .network import (
    ACT_LINEAR,
    ACT_SOFT,
    ACT_SPIKE,
    Network,
    _GroupTape,
    _ModuleTape,
    _ReadoutTape,
    _batchnorm_backward,
    delay_conv_backward,
    forward_pass,
    named_parameters,
)

OPT_ADAM = "adam"
OPT_SGD = "sgd"


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = OPT_ADAM
    momentum: float = 0.9  # sgd only
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    soft_forward: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in (OPT_ADAM, OPT_SGD):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochStats:
    train_loss: float
    train_accuracy: float
    valid_accuracy: float
    seconds: float


@dataclass
class TrainRun:
    epochs: list
    test_accuracy: float
    best_valid_accuracy: float
    best_epoch: int
    config: TrainConfig
    seed: int


def train_run_to_dict(run: TrainRun) -> dict:
    return {
        "epochs": [
            {
                "train_loss": e.train_loss,
                "train_accuracy": e.train_accuracy,
                "valid_accuracy": e.valid_accuracy,
                "seconds": e.seconds,
            }
            for e in run.epochs
        ],
        "test_accuracy": run.test_accuracy,
        "best_valid_accuracy": run.best_valid_accuracy,
        "best_epoch": run.best_epoch,
        "seed": run.seed,
        "config": {
            "epochs": run.config.epochs,
            "batch_size": run.config.batch_size,
            "learning_rate": run.config.learning_rate,
            "optimizer": run.config.optimizer,
            "momentum": run.config.momentum,
            "beta1": run.config.beta1,
            "beta2": run.config.beta2,
            "adam_eps": run.config.adam_eps,
            "seed": run.config.seed,
            "soft_forward": run.config.soft_forward,
        },
    }


# --------------------------------------------------------------------------
# loss
# --------------------------------------------------------------------------

def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_cross_entropy(logits, labels) -> float:
    """Mean negative log softmax probability of the true class."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ConfigError("logits must be (batch, classes)")
    if labels.shape != (logits.shape[0],):
        raise ConfigError("need one label per batch row")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[1]:
        raise ConfigError("label out of range")
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def _loss_grad_cross_entropy(logits, labels):
    loss = loss_cross_entropy(logits, labels)
    probs = np.exp(_log_softmax(logits))
    g = probs
    g[np.arange(len(labels)), labels] -= 1.0
    return loss, g / len(labels)


def _loss_grad_squared(logits, labels):
    # quadratic loss for the linear gradient check: central differences are
    # exact when each parameter enters the loss at most quadratically
    target = np.zeros_like(logits)
    target[np.arange(len(labels)), labels] = 1.0
    diff = logits - target
    loss = float(0.5 * (diff ** 2).sum() / len(labels))
    return loss, diff / len(labels)


# --------------------------------------------------------------------------
# reverse pass
# --------------------------------------------------------------------------

@dataclass
class BackwardResult:
    loss: float
    logits: np.ndarray
    grads: dict
    g_input: np.ndarray


def _reverse(net: Network, tape, g_logits, *, training: bool, activation: str) -> tuple:
    grads = {}
    readout_tape = tape[-1]
    assert isinstance(readout_tape, _ReadoutTape)
    t_out = readout_tape.t_out
    batch = g_logits.shape[0]
    # logits are the time-mean of the integrator trace
    g_m = np.broadcast_to(g_logits / t_out, (t_out, batch, g_logits.shape[1]))
    g_c = _kernels.leaky_backward(np.ascontiguousarray(g_m), net.readout_eta)
    g, g_w, g_b = delay_conv_backward(readout_tape.x_in, net.readout, g_c)
    grads["readout.weights"] = g_w
    grads["readout.bias"] = g_b
    _require_finite(grads, "readout", ("readout.weights", "readout.bias"))

    for entry in reversed(tape[:-1]):
        if isinstance(entry, _GroupTape):
            g = temporal.grouped_backward(g, entry.idx, entry.in_shape)
            continue
        mod = net.modules[entry.index]
        name = f"hidden{entry.index}"
        if entry.nar:
            # y = module_output + padded(x_in): the module branch sees the
            # whole gradient, the identity branch its own time extent
            g_res = g[: entry.x_in.shape[0]].copy()
            g_o = g
        else:
            g_res = None
            g_o = g
        if entry.drop_mask is not None:
            g_s = g_o * entry.drop_mask
        else:
            g_s = g_o
        p = mod.lif
        g_s = np.ascontiguousarray(g_s)
        if activation == ACT_SPIKE:
            g_n = _kernels.lif_backward(
                g_s, entry.u_trace, entry.s_trace, p.eta, p.v_th, p.v_reset, p.hard, p.alpha
            )
        elif activation == ACT_SOFT:
            g_n = _kernels.lif_backward_soft(
                g_s, entry.u_trace, entry.s_trace, p.eta, p.v_th, p.v_reset, p.hard, p.alpha
            )
        else:
            g_n = g_s
        g_cv, g_gamma, g_beta = _batchnorm_backward(g_n, entry.bn_cache, mod.bn)
        g_x, g_w, g_b = delay_conv_backward(entry.x_in, mod.conv, g_cv)
        if g_res is not None:
            g_x = g_x + g_res
        grads[f"{name}.conv.weights"] = g_w
        grads[f"{name}.conv.bias"] = g_b
        grads[f"{name}.bn.gamma"] = g_gamma
        grads[f"{name}.bn.beta"] = g_beta
        _require_finite(
            grads, name,
            (f"{name}.conv.weights", f"{name}.conv.bias", f"{name}.bn.gamma", f"{name}.bn.beta"),
        )
        g = g_x
    return grads, g


def _require_finite(grads, layer, names):
    for n in names:
        if not np.isfinite(grads[n]).all():
            raise NumericError(f"non-finite gradient in layer {layer} ({n})")


def backward(
    net: Network,
    batch,
    labels,
    *,
    training: bool = True,
    seed: int = 0,
    activation: str = ACT_SPIKE,
    update_running: bool = True,
    loss: str = "ce",
) -> BackwardResult:
    """Forward with tape, then reverse-mode accumulation through time.

    Returns the loss, the logits, gradients for every trainable array
    (keyed like named_parameters), and the gradient with respect to the
    input tensor.
    """
    result = forward_pass(
        net, batch, training=training, seed=seed, activation=activation,
        with_tape=True, with_record=False, update_running=update_running,
    )
    labels = np.asarray(labels, dtype=np.int64)
    if loss == "ce":
        loss_val, g_logits = _loss_grad_cross_entropy(result.logits, labels)
    elif loss == "sq":
        loss_val, g_logits = _loss_grad_squared(result.logits, labels)
    else:
        raise ConfigError(f"unknown loss {loss!r}")
    grads, g_input = _reverse(net, result.tape, g_logits, training=training, activation=activation)
    return BackwardResult(loss_val, result.logits, grads, g_input)


# --------------------------------------------------------------------------
# optimizers
# --------------------------------------------------------------------------

class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params}
        self.v = {name: np.zeros_like(arr) for name, arr in params}

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in params:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, params, lr, momentum):
        self.lr = lr
        self.momentum = momentum
        self.vel = {name: np.zeros_like(arr) for name, arr in params}

    def step(self, params, grads):
        for name, arr in params:
            v = self.vel[name]
            v *= self.momentum
            v += grads[name]
            arr -= self.lr * v


def _make_optimizer(config: TrainConfig, params):
    if config.optimizer == OPT_ADAM:
        return _Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    return _Sgd(params, config.learning_rate, config.momentum)


# --------------------------------------------------------------------------
# evaluation and training loop
# --------------------------------------------------------------------------

def _count_correct(logits, labels) -> int:
    """Argmax agreement; a tied maximum counts as an error."""
    top = logits.max(axis=1, keepdims=True)
    is_top = logits == top
    unique = is_top.sum(axis=1) == 1
    pred = logits.argmax(axis=1)
    return int(np.count_nonzero(unique & (pred == labels)))


def evaluate(net: Network, dataset, batch_size: int = 128) -> float:
    """Fraction of samples whose unique argmax logit matches the label."""
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    correct = 0
    for start in range(0, len(dataset), batch_size):
        idx = range(start, min(start + batch_size, len(dataset)))
        values, labels = dataset.stack(idx)
        result = forward_pass(net, values, training=False, with_record=False)
        correct += _count_correct(result.logits, labels)
    return correct / len(dataset)


def train(net: Network, datasets, config: TrainConfig) -> TrainRun:
    """Mini-batch training; retains the best-valid-accuracy weights.

    ``datasets`` is a (train, valid, test) triple sharing the network's
    unit and class counts. Deterministic for a fixed (seed, config,
    datasets): shuffling and dropout seeds all derive from config.seed.
    """
    train_ds, valid_ds, test_ds = datasets
    for ds in datasets:
        if ds.n_units != net.spec.n_inputs:
            raise ConfigError(
                f"dataset has {ds.n_units} units, network expects {net.spec.n_inputs}"
            )
        if ds.n_classes != net.spec.n_classes:
            raise ConfigError(
                f"dataset has {ds.n_classes} classes, network expects {net.spec.n_classes}"
            )
    rng = np.random.default_rng(config.seed)
    params = named_parameters(net)
    optimizer = _make_optimizer(config, params)
    activation = ACT_SOFT if config.soft_forward else ACT_SPIKE

    x_all, y_all = train_ds.stack()
    n = len(train_ds)
    epochs = []
    best_valid = -1.0
    best_epoch = -1
    best_weights = None

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = np.ascontiguousarray(x_all[:, idx, :])
            labels = y_all[idx]
            drop_seed = int(rng.integers(0, 2**31 - 1))
            try:
                result = backward(
                    net, batch, labels, training=True, seed=drop_seed, activation=activation
                )
            except NumericError as e:
                raise TrainingDiverged(
                    f"non-finite values at epoch {epoch}, batch start {start} "
                    f"(lr={config.learning_rate}, optimizer={config.optimizer}): {e}"
                ) from e
            if not np.isfinite(result.loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}, batch start {start} "
                    f"(lr={config.learning_rate}, optimizer={config.optimizer})"
                )
            optimizer.step(params, result.grads)
            total_loss += result.loss * len(idx)
            total_correct += _count_correct(result.logits, labels)
        valid_acc = evaluate(net, valid_ds)
        epochs.append(
            EpochStats(
                train_loss=total_loss / n,
                train_accuracy=total_correct / n,
                valid_accuracy=valid_acc,
                seconds=time.perf_counter() - t0,
            )
        )
        if valid_acc > best_valid:
            best_valid = valid_acc
            best_epoch = epoch
            best_weights = {name: arr.copy() for name, arr in _all_state(net)}

    if best_weights is not None:
        for name, arr in _all_state(net):
            arr[...] = best_weights[name]
    test_acc = evaluate(net, test_ds)
    return TrainRun(
        epochs=epochs,
        test_accuracy=test_acc,
        best_valid_accuracy=best_valid if best_epoch >= 0 else test_acc,
        best_epoch=best_epoch,
        config=config,
        seed=config.seed,
    )


def _all_state(net: Network):
    from .network import state_arrays

    return state_arrays(net)


# --------------------------------------------------------------------------
# gradient verification
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    n_checked: int
    epsilon: float
    reliable: bool
    worst_parameter: str = ""


def grad_check(
    net: Network,
    batch,
    labels,
    *,
    epsilon: float = 1e-5,
    n_samples: int = 200,
    mode: str = "soft",
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    ``mode`` "soft" runs the sigmoid forward with cross-entropy in training
    mode; "linear" bypasses the neuron (identity activation), uses
    inference-mode normalization and a quadratic loss, so differences are
    exact up to round-off. The relative error per parameter is
    |g_fd - g_bp| / max(|g_fd|, |g_bp|, 1e-6). Epsilon outside
    [1e-6, 1e-3] marks the comparison unreliable in the report.
    """
    if mode == "soft":
        activation, loss, training = ACT_SOFT, "ce", True
    elif mode == "linear":
        activation, loss, training = ACT_LINEAR, "sq", False
    else:
        raise ConfigError(f"unknown grad-check mode {mode!r}")
    reliable = 1e-6 <= epsilon <= 1e-3

    labels = np.asarray(labels, dtype=np.int64)
    result = backward(
        net, batch, labels, training=training, seed=0,
        activation=activation, update_running=False, loss=loss,
    )
    params = named_parameters(net)
    sizes = [arr.size for _, arr in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_samples, total), replace=False)

    def loss_only():
        r = forward_pass(
            net, batch, training=training, seed=0, activation=activation,
            with_record=False, update_running=False,
        )
        if loss == "ce":
            return _loss_grad_cross_entropy(r.logits, labels)[0]
        return _loss_grad_squared(r.logits, labels)[0]

    offsets = np.cumsum([0] + sizes)
    max_rel = 0.0
    sum_rel = 0.0
    worst = ""
    for flat in sorted(int(c) for c in chosen):
        k = int(np.searchsorted(offsets, flat, side="right")) - 1
        name, arr = params[k]
        j = flat - offsets[k]
        orig = arr.flat[j]
        arr.flat[j] = orig + epsilon
        up = loss_only()
        arr.flat[j] = orig - epsilon
        down = loss_only()
        arr.flat[j] = orig
        fd = (up - down) / (2.0 * epsilon)
        bp = result.grads[name].flat[j]
        rel = abs(fd - bp) / max(abs(fd), abs(bp), 1e-6)
        sum_rel += rel
        if rel > max_rel:
            max_rel = rel
            worst = f"{name}[{j}]"
    n_checked = len(chosen)
    return GradCheckReport(
        max_rel_error=max_rel,
        mean_rel_error=sum_rel / max(n_checked, 1),
        n_checked=n_checked,
        epsilon=epsilon,
        reliable=reliable,
        worst_parameter=worst,
    )
