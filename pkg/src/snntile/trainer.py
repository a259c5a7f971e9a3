"""Surrogate-gradient BPTT for layered integrate-and-fire networks.

The forward pass unrolls the same dynamics as the behavioral simulator
(one-timestep synaptic delay, reset to zero, input neurons driven by direct
injection). Spikes are hard Heaviside steps; the backward pass swaps the
step's derivative for the arctan surrogate

    dS/dU ~= (1/pi) / (1 + (k * (U - V_th))**2),   k = pi by default.

With ``smooth=True`` the forward pass instead emits the surrogate's
antiderivative ``1/2 + arctan(k u) / (pi k)``, so the very same backward code
yields the exact gradient of a smooth loss. That is what
:func:`finite_diff_check` differentiates numerically.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, InputError, TrainingError
from .network import NetworkGraph, fully_connected

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayeredSpec:
    layer_sizes: tuple[int, ...]
    threshold: float = 1.0
    beta: float = 1.0
    horizon: int = 25

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ContractError("need at least two layers, all of size >= 1")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise ContractError("beta must lie in (0, 1]")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def weight_shapes(self):
        return [(a, b) for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    def to_graph(self, weights) -> NetworkGraph:
        return fully_connected(self.layer_sizes, weights, self.threshold, self.beta)


@dataclass
class TrainConfig:
    learning_rate: float = 0.2
    batch_size: int = 20
    epochs: int = 10
    seed: int = 0
    loss: str = "rate_ce"
    slope: float = math.pi
    input_gain: float = 0.5       # injection per step = pixel fraction * gain * threshold
    dataset: str = ""

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1 or self.slope <= 0:
            raise ContractError("learning rate, batch size, epochs and slope must be positive")
        if self.loss != "rate_ce":
            raise ContractError(f"unsupported loss {self.loss!r}")


# -- surrogate -------------------------------------------------------------

def surrogate_grad(u, slope=math.pi):
    """arctan surrogate derivative at threshold-centred membrane ``u``."""
    return (1.0 / math.pi) / (1.0 + (slope * np.asarray(u, dtype=np.float64)) ** 2)


def smooth_spike(u, slope=math.pi):
    """Antiderivative of :func:`surrogate_grad`, ranging over (0, 1)."""
    return 0.5 + np.arctan(slope * np.asarray(u, dtype=np.float64)) / (math.pi * slope)


def init_weights(spec: LayeredSpec, rng: np.random.Generator):
    return [rng.uniform(-1.0, 1.0, size=(a, b)) / math.sqrt(a) for a, b in spec.weight_shapes]


def _check_weights(spec, weights):
    if len(weights) != len(spec.weight_shapes):
        raise ContractError(f"expected {len(spec.weight_shapes)} weight matrices")
    for w, shape in zip(weights, spec.weight_shapes):
        if np.shape(w) != shape:
            raise ContractError(f"weight shape {np.shape(w)} != {shape}")


# -- forward / backward -----------------------------------------------------

@dataclass
class ForwardCache:
    spikes: list          # per layer, (T, B, n); layer 0 is the input layer
    membranes: list       # per non-input layer, (T, B, n) pre-reset membrane
    smooth: bool
    slope: float

    @property
    def output_spikes(self):
        return self.spikes[-1]


def _integrate_inputs(spec, injections, smooth, slope):
    # input neurons have no weights upstream: their spikes are constants
    T, B, n = injections.shape
    out = np.zeros((T, B, n))
    v = np.zeros((B, n))
    for t in range(T):
        u = spec.beta * v + injections[t]
        s = smooth_spike(u - spec.threshold, slope) if smooth else (u >= spec.threshold).astype(np.float64)
        v = u * (1.0 - s)
        out[t] = s
    return out


def surrogate_forward(spec: LayeredSpec, weights, injections, smooth=False, slope=math.pi) -> ForwardCache:
    """Unrolled forward pass.

    ``injections`` is ``(B, T, n_inputs)`` (the batch of stimulus plans).
    """
    _check_weights(spec, weights)
    inj = np.asarray(injections, dtype=np.float64)
    if inj.ndim != 3 or inj.shape[0] < 1 or inj.shape[2] != spec.layer_sizes[0]:
        raise ContractError(f"injections must be (B, T, {spec.layer_sizes[0]}) with B >= 1")
    inj = inj.transpose(1, 0, 2)
    T, B, _ = inj.shape
    spikes = [_integrate_inputs(spec, inj, smooth, slope)]
    membranes = []
    for w in weights:
        prev = spikes[-1]
        n = w.shape[1]
        S = np.zeros((T, B, n))
        U = np.zeros((T, B, n))
        v = np.zeros((B, n))
        for t in range(T):
            u = spec.beta * v
            if t > 0:
                u = u + prev[t - 1] @ w
            s = smooth_spike(u - spec.threshold, slope) if smooth else (u >= spec.threshold).astype(np.float64)
            v = u * (1.0 - s)
            U[t], S[t] = u, s
        spikes.append(S)
        membranes.append(U)
    return ForwardCache(spikes, membranes, smooth, slope)


def rate_loss(counts, labels):
    """Mean cross-entropy of softmax(spike counts); returns ``(loss, dloss/dcounts)``."""
    B = counts.shape[0]
    z = counts - counts.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    idx = np.arange(B)
    loss = float(-np.mean(np.log(p[idx, labels])))
    grad = p
    grad[idx, labels] -= 1.0
    return loss, grad / B


def backward(spec: LayeredSpec, weights, cache: ForwardCache, dcounts):
    """BPTT through the cached unroll. ``dcounts`` is dL/d(total output spikes)."""
    L = len(weights)
    T, B, _ = cache.spikes[0].shape
    grads = [np.zeros_like(w, dtype=np.float64) for w in weights]
    g_cur_next = [np.zeros((B, w.shape[1])) for w in weights]  # dL/dI_l(t+1)
    g_v = [np.zeros((B, w.shape[1])) for w in weights]          # dL/dV_l(t), V = post-reset membrane
    for t in range(T - 1, -1, -1):
        g_cur = [None] * L
        for l in range(L - 1, -1, -1):
            u = cache.membranes[l][t]
            s = cache.spikes[l + 1][t]
            g_s = -g_v[l] * u
            if l == L - 1:
                g_s = g_s + dcounts
            else:
                g_s = g_s + g_cur_next[l + 1] @ weights[l + 1].T
            g_u = g_v[l] * (1.0 - s) + g_s * surrogate_grad(u - spec.threshold, cache.slope)
            if t > 0:
                grads[l] += cache.spikes[l][t - 1].T @ g_u
            g_cur[l] = g_u
            g_v[l] = spec.beta * g_u
        g_cur_next = g_cur
    return grads


def loss_and_grad(spec, weights, injections, labels, smooth=False, slope=math.pi):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (np.shape(injections)[0],):
        raise ContractError("labels must have one entry per sample")
    cache = surrogate_forward(spec, weights, injections, smooth=smooth, slope=slope)
    counts = cache.output_spikes.sum(axis=0)
    loss, dcounts = rate_loss(counts, labels)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss} (max |count| {np.abs(counts).max()})")
    return loss, backward(spec, weights, cache, dcounts), counts


def bptt_grad(spec, weights, injections, labels, smooth=False, slope=math.pi):
    """Gradient of the rate cross-entropy w.r.t. every weight matrix."""
    return loss_and_grad(spec, weights, injections, labels, smooth=smooth, slope=slope)[1]


def smooth_loss(spec, weights, injections, labels, slope=math.pi) -> float:
    cache = surrogate_forward(spec, weights, injections, smooth=True, slope=slope)
    return rate_loss(cache.output_spikes.sum(axis=0), np.asarray(labels))[0]


def finite_diff_check(spec, weights, injections, labels, epsilon=1e-4, n_coords=100, seed=0,
                      slope=math.pi, floor=1e-6) -> float:
    """Worst relative error between BPTT and central differences of the smooth loss.

    Samples ``n_coords`` weight coordinates (all of them if there are fewer).
    Gradients smaller than ``floor`` are compared absolutely, since central
    differences carry roughly 1e-11 of roundoff at ``epsilon=1e-4``.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    weights = [np.array(w, dtype=np.float64) for w in weights]
    analytic = bptt_grad(spec, weights, injections, labels, smooth=True, slope=slope)
    coords = [(l, i, j) for l, w in enumerate(weights) for i in range(w.shape[0]) for j in range(w.shape[1])]
    rng = np.random.default_rng(seed)
    if len(coords) > n_coords:
        coords = [coords[k] for k in rng.choice(len(coords), n_coords, replace=False)]
    worst = 0.0
    for l, i, j in coords:
        orig = weights[l][i, j]
        weights[l][i, j] = orig + epsilon
        up = smooth_loss(spec, weights, injections, labels, slope)
        weights[l][i, j] = orig - epsilon
        down = smooth_loss(spec, weights, injections, labels, slope)
        weights[l][i, j] = orig
        numeric = (up - down) / (2 * epsilon)
        a = analytic[l][i, j]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    return worst


# -- training loop -----------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainResult:
    spec: LayeredSpec
    weights: list
    history: list = field(default_factory=list)

    def to_graph(self) -> NetworkGraph:
        return self.spec.to_graph(self.weights)


def pixel_injections(images, spec: LayeredSpec, gain: float = 0.5) -> np.ndarray:
    """Float direct-injection plans ``(B, T, n_pixels)`` from 0..255 images."""
    flat = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    per_step = flat / 255.0 * gain * spec.threshold
    return np.repeat(per_step[:, None, :], spec.horizon, axis=1)


def train(spec: LayeredSpec, config: TrainConfig, injections, labels,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Plain minibatch SGD on the rate cross-entropy; reproducible from ``config.seed``."""
    inj = np.asarray(injections, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if inj.shape[0] != labels.shape[0] or inj.shape[0] == 0:
        raise ContractError("need a non-empty dataset with one label per sample")
    if inj.shape[1] != spec.horizon:
        raise ContractError(f"stimulus horizon {inj.shape[1]} != spec horizon {spec.horizon}")
    rng = np.random.default_rng(config.seed)
    weights = init_weights(spec, rng)
    result = TrainResult(spec, weights)
    n = len(labels)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads, counts = loss_and_grad(spec, weights, inj[idx], labels[idx], slope=config.slope)
            for w, g in zip(weights, grads):
                w -= config.learning_rate * g
                if not np.all(np.isfinite(w)):
                    raise TrainingError(f"weights diverged in epoch {epoch}")
            total += loss * len(idx)
            correct += int(np.sum(np.argmax(counts, axis=1) == labels[idx]))
        rec = EpochRecord(epoch, total / n, correct / n)
        result.history.append(rec)
        log.info("epoch %d loss %.4f acc %.3f", rec.epoch, rec.loss, rec.accuracy)
        if on_epoch is not None:
            on_epoch(rec)
    return result


def predict(spec: LayeredSpec, weights, injections) -> np.ndarray:
    counts = surrogate_forward(spec, weights, injections).output_spikes.sum(axis=0)
    return np.argmax(counts, axis=1)


def temporal_xor_task(threshold=1.0, horizon=16, burst=6, late=8):
    """Four-sample temporal XOR.

    Each input neuron receives a burst of ``burst`` threshold-sized pulses,
    starting at step 0 for bit 0 and at ``late`` for bit 1. Every sample has
    the same input spike counts, so only timing separates the classes;
    label = bit_a XOR bit_b. Bursts rather than single pulses keep a freshly
    initialised 2-4-2 network from starting silent.
    """
    if late < 1 or late + burst > horizon:
        raise ContractError("need 1 <= late and late + burst <= horizon")
    bits = [(0, 0), (0, 1), (1, 0), (1, 1)]
    inj = np.zeros((4, horizon, 2))
    for k, pair in enumerate(bits):
        for i, bit in enumerate(pair):
            start = late if bit else 0
            inj[k, start:start + burst, i] = threshold
    labels = np.array([a ^ b for a, b in bits])
    return inj, labels
