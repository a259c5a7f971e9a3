"""Hand-coded any-to-any parity detector.

Given two input pulses on neuron 1, neuron 16 spikes one step after the
second pulse iff the gap between the pulses is even.

Wiring (threshold 1.0, every weight exactly representable after int8
quantization at scale 127):

* 1 -> 2 (+1.0): neuron 2 relays the first pulse.
* 2 -> 3 (+1.0), 3 -> 4 (+1.0), 4 -> 3 (+1.0): the relay starts a
  two-neuron oscillator; 3 fires on odd steps after the first pulse, 4 on even.
* 3 -> 2 (-1.0), 4 -> 2 (-1.0): the running oscillator vetoes the relay, so
  2 fires only once.
* 1 -> 16 (+0.5), 3 -> 16 (+0.5): sub-threshold halves of an AND gate.
* 2 -> 16 (-0.5), 4 -> 16 (-0.5): cancel the charge that the first pulse
  and every completed oscillator cycle would otherwise leave behind.

An even gap lands the second pulse on a step where 3 fires, so 16 collects
0.5 + 0.5 and fires. An odd gap lands it with 4, which cancels. The decision
is read on the step after the second pulse; the AND gate has no leak, so the
leftover +0.5 from an odd-gap pulse can trip 16 one oscillator period later.
"""
from __future__ import annotations

import numpy as np

from .network import NetworkGraph, StimulusPlan

INPUT, RELAY, OSC_A, OSC_B, OUTPUT = 1, 2, 3, 4, 16
NEURON_COUNT = 17
THRESHOLD = 1.0

EDGES = (
    (INPUT, RELAY, 1.0),
    (RELAY, OSC_A, 1.0),
    (OSC_A, OSC_B, 1.0),
    (OSC_B, OSC_A, 1.0),
    (OSC_A, RELAY, -1.0),
    (OSC_B, RELAY, -1.0),
    (INPUT, OUTPUT, 0.5),
    (OSC_A, OUTPUT, 0.5),
    (RELAY, OUTPUT, -0.5),
    (OSC_B, OUTPUT, -0.5),
)

# Golden tables as {timestep (1-based): spiking neuron ids}
GOLDEN_EVEN = {1: {1}, 2: {2}, 3: {1, 3}, 4: {4, 16}}
GOLDEN_ODD = {1: {1}, 2: {2}, 3: {3}, 4: {1, 4}, 5: {3}}
TABLE_NEURONS = (1, 2, 3, 4, 16)


def build_parity_network() -> NetworkGraph:
    return NetworkGraph.from_edges(NEURON_COUNT, EDGES, (INPUT,), (OUTPUT,), THRESHOLD, 1.0)


def parity_stimulus(first: int, second: int, horizon: int, value) -> StimulusPlan:
    """Pulses of ``value`` on the input neuron at 1-based timesteps ``first`` and ``second``."""
    return StimulusPlan.pulses(horizon, 1, [(first - 1, 0), (second - 1, 0)], value)


def gap_case(gap: str):
    """``(first, second, horizon, golden)`` for the ``even`` or ``odd`` table."""
    if gap == "even":
        return 1, 3, 4, GOLDEN_EVEN
    if gap == "odd":
        return 1, 4, 5, GOLDEN_ODD
    raise ValueError(f"gap must be 'even' or 'odd', got {gap!r}")


def spike_table(spikes: np.ndarray, neurons=TABLE_NEURONS) -> dict[int, set[int]]:
    """Restrict a ``(T, N)`` spike array to ``neurons`` as a 1-based table."""
    return {t + 1: {n for n in neurons if spikes[t, n]} for t in range(spikes.shape[0])}


def format_table(spikes: np.ndarray, neurons=TABLE_NEURONS) -> str:
    head = "t\\idx " + " ".join(f"{n:>3}" for n in neurons)
    lines = [head]
    for t in range(spikes.shape[0]):
        lines.append(f"t={t + 1:<4}" + " ".join(f"{int(spikes[t, n]):>3}" for n in neurons))
    return "\n".join(lines)
