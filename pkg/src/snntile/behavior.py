"""Behavioral (non-pipelined) simulator: the semantic ground truth.

Every timestep each neuron integrates the weighted spikes its presynaptic
neighbours emitted on the *previous* timestep plus any direct injection,
fires when the membrane reaches threshold (equality fires) and resets to 0.
Integer mode has no leak, accumulates wide and saturates only the stored
membrane to int8.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractError, InputError
from .network import NetworkGraph, NeuronStateVector, SpikeTrain, StimulusPlan, pack_output_words

INT8_MIN, INT8_MAX = -128, 127


def _check_mode(mode: str) -> bool:
    if mode not in ("float", "int"):
        raise ContractError(f"mode must be 'float' or 'int', got {mode!r}")
    return mode == "int"


def _check_net(net: NetworkGraph, integer: bool):
    if integer:
        if not net.is_integer:
            raise ContractError("int mode needs integer weights (quantize first)")
    elif not np.all(np.isfinite(net.weight)) or not np.isfinite(net.threshold):
        raise InputError("non-finite weight or threshold")


def behavioral_step(net: NetworkGraph, state: NeuronStateVector, injection, mode="float"):
    """Advance one timestep; returns ``(new_state, spikes)``."""
    integer = _check_mode(mode)
    _check_net(net, integer)
    n = net.neuron_count
    if state.membranes.shape != (n,) or state.last_spikes.shape != (n,):
        raise ContractError("state arrays must have neuron_count entries")
    injection = np.asarray(injection)
    if injection.shape != (len(net.input_ids),):
        raise ContractError(f"injection must have {len(net.input_ids)} entries")
    if not integer and not np.all(np.isfinite(injection)):
        raise InputError("non-finite injection")

    dtype = np.int64 if integer else np.float64
    current = np.zeros(n, dtype=dtype)
    active = state.last_spikes[net.pre].astype(bool)
    np.add.at(current, net.post[active], net.weight[active].astype(dtype))
    current[list(net.input_ids)] += injection.astype(dtype)

    if integer:
        u = state.membranes.astype(np.int64) + current
    else:
        u = net.beta * state.membranes.astype(np.float64) + current
    spikes = (u >= net.threshold).astype(np.uint8)
    if integer:
        u = np.clip(u, INT8_MIN, INT8_MAX)
    membranes = np.where(spikes == 1, 0, u).astype(dtype)
    return NeuronStateVector(membranes, spikes.copy()), spikes


def run_batch(net: NetworkGraph, injections, mode="float", trace=False, backend=None):
    """Run ``B`` independent stimuli at once.

    ``injections`` has shape ``(B, T, n_inputs)``. Returns ``(spikes, final_membranes,
    membrane_trace)`` with spikes shaped ``(B, T, N)``.
    """
    integer = _check_mode(mode)
    _check_net(net, integer)
    inj = np.asarray(injections)
    if inj.ndim != 3 or inj.shape[2] != len(net.input_ids):
        raise ContractError(f"injections must be (B, T, {len(net.input_ids)})")
    if inj.shape[1] < 1:
        raise InputError("horizon must be at least 1")
    if not integer and not np.all(np.isfinite(inj)):
        raise InputError("non-finite injection")
    if integer and inj.dtype.kind == "f":
        if not np.all(inj == np.round(inj)):
            raise InputError("int mode needs integer injections")
    return kernels.behavior(backend).run(net, inj, integer, trace=trace, lo=INT8_MIN, hi=INT8_MAX)


def behavioral_run(net: NetworkGraph, stim: StimulusPlan, mode="float", trace=False, backend=None) -> SpikeTrain:
    """Simulate ``stim.horizon`` timesteps from the all-zero state."""
    spikes, _, mem = run_batch(net, stim.injections[None], mode, trace=trace, backend=backend)
    rows = net.output_rows
    return SpikeTrain(spikes[0], pack_output_words(spikes[0], rows), rows, mem[0] if trace else None)


def count_synapses(net: NetworkGraph) -> int:
    return int(len(net.pre))


def classify_rate(train: SpikeTrain, output_ids) -> int:
    """Index (into ``output_ids``) of the most active output neuron; ties go low."""
    output_ids = list(output_ids)
    if not output_ids:
        raise ContractError("output_ids must be non-empty")
    if train.horizon < 1:
        raise InputError("empty spike train")
    counts = train.spikes[:, output_ids].sum(axis=0)
    return int(np.argmax(counts))


def classify_counts(spikes: np.ndarray, output_ids) -> np.ndarray:
    """Vectorised :func:`classify_rate` for a ``(B, T, N)`` spike batch."""
    counts = spikes[:, :, list(output_ids)].sum(axis=1)
    return np.argmax(counts, axis=1)
