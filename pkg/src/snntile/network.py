"""Network, state, stimulus and spike-record types.

A :class:`NetworkGraph` is an any-to-any directed graph of integrate-and-fire
neurons. Synapses are stored as three parallel arrays (``pre``, ``post``,
``weight``) sorted by ``(pre, post)`` with duplicate pairs merged by summing.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, InputError, ParseError

TILE = 16
NETWORK_FORMAT = "snntile-network"
NETWORK_VERSION = 1


def _as_id_tuple(ids: Iterable[int], name: str, n: int) -> tuple[int, ...]:
    out = tuple(int(i) for i in ids)
    if len(set(out)) != len(out):
        raise ContractError(f"{name} contains duplicates")
    for i in out:
        if not 0 <= i < n:
            raise ContractError(f"{name} entry {i} outside [0, {n})")
    return out


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    neuron_count: int
    pre: np.ndarray
    post: np.ndarray
    weight: np.ndarray
    input_ids: tuple[int, ...]
    output_ids: tuple[int, ...]
    threshold: float
    beta: float = 1.0

    def __post_init__(self):
        n = int(self.neuron_count)
        if n < 1:
            raise ContractError("neuron_count must be positive")
        pre = np.asarray(self.pre, dtype=np.int64).ravel()
        post = np.asarray(self.post, dtype=np.int64).ravel()
        w = np.asarray(self.weight).ravel()
        if w.dtype.kind not in "iuf":
            raise ContractError("weights must be numeric")
        if not (len(pre) == len(post) == len(w)):
            raise ContractError("pre/post/weight lengths differ")
        if len(pre) and (pre.min() < 0 or post.min() < 0 or pre.max() >= n or post.max() >= n):
            raise ContractError("synapse endpoint outside neuron range")
        if not 0.0 < float(self.beta) <= 1.0:
            raise ContractError("beta must lie in (0, 1]")

        # merge multi-edges; keys sorted by (pre, post)
        keys = pre * n + post
        uniq, inverse = np.unique(keys, return_inverse=True)
        if w.dtype.kind == "f":
            merged = np.zeros(len(uniq), dtype=np.float64)
        else:
            merged = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(merged, inverse, w)
        for arr in (uniq, merged):
            arr.setflags(write=False)
        pre_m = (uniq // n).astype(np.int64)
        post_m = (uniq % n).astype(np.int64)
        pre_m.setflags(write=False)
        post_m.setflags(write=False)

        object.__setattr__(self, "neuron_count", n)
        object.__setattr__(self, "pre", pre_m)
        object.__setattr__(self, "post", post_m)
        object.__setattr__(self, "weight", merged)
        object.__setattr__(self, "input_ids", _as_id_tuple(self.input_ids, "input_ids", n))
        object.__setattr__(self, "output_ids", _as_id_tuple(self.output_ids, "output_ids", n))
        if merged.dtype.kind == "f":
            threshold = float(self.threshold)
        else:
            if float(self.threshold) != int(self.threshold):
                raise ContractError("integer networks need an integer threshold")
            threshold = int(self.threshold)
        object.__setattr__(self, "threshold", threshold)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def from_edges(cls, neuron_count, edges, input_ids, output_ids, threshold, beta=1.0):
        """Build from an iterable of ``(pre, post, weight)`` triples."""
        edges = list(edges)
        if edges:
            pre, post, w = zip(*edges)
        else:
            pre, post, w = (), (), ()
        weight = np.asarray(w, dtype=np.float64) if edges else np.zeros(0)
        return cls(neuron_count, np.asarray(pre, dtype=np.int64), np.asarray(post, dtype=np.int64),
                   weight, tuple(input_ids), tuple(output_ids), threshold, beta)

    @property
    def is_integer(self) -> bool:
        return self.weight.dtype.kind in "iu"

    @property
    def output_rows(self) -> tuple[int, ...]:
        """Tile rows (groups of 16 neurons) that hold at least one output neuron."""
        return tuple(sorted({i // TILE for i in self.output_ids}))

    def edges(self):
        return list(zip(self.pre.tolist(), self.post.tolist(), self.weight.tolist()))

    def dense(self, dtype=None) -> np.ndarray:
        """Dense ``[pre, post]`` weight matrix."""
        m = np.zeros((self.neuron_count, self.neuron_count), dtype=dtype or self.weight.dtype)
        m[self.pre, self.post] = self.weight
        return m

    def __eq__(self, other):
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return (self.neuron_count == other.neuron_count
                and np.array_equal(self.pre, other.pre)
                and np.array_equal(self.post, other.post)
                and np.array_equal(self.weight, other.weight)
                and self.input_ids == other.input_ids
                and self.output_ids == other.output_ids
                and self.threshold == other.threshold
                and self.beta == other.beta)

    __hash__ = None

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        w = self.weight.tolist()
        return {
            "format": NETWORK_FORMAT,
            "version": NETWORK_VERSION,
            "neuron_count": self.neuron_count,
            "weight_type": "int" if self.is_integer else "float",
            "synapses": [[p, q, x] for p, q, x in zip(self.pre.tolist(), self.post.tolist(), w)],
            "input_ids": list(self.input_ids),
            "output_ids": list(self.output_ids),
            "threshold": self.threshold,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, doc: dict, path=None) -> "NetworkGraph":
        if doc.get("format") != NETWORK_FORMAT:
            raise ParseError(f"not a {NETWORK_FORMAT} document", path=path)
        if doc.get("version") != NETWORK_VERSION:
            raise ParseError(f"unsupported version {doc.get('version')!r}", path=path)
        try:
            syn = doc["synapses"]
            integer = doc.get("weight_type", "float") == "int"
            if syn:
                arr = np.asarray(syn, dtype=np.float64).reshape(-1, 3)
                pre, post = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64)
                w = arr[:, 2].astype(np.int64) if integer else arr[:, 2]
            else:
                pre = post = np.zeros(0, dtype=np.int64)
                w = np.zeros(0, dtype=np.int64 if integer else np.float64)
            return cls(doc["neuron_count"], pre, post, w, doc["input_ids"], doc["output_ids"],
                       doc["threshold"], doc.get("beta", 1.0))
        except KeyError as exc:
            raise ParseError(f"missing field {exc}", path=path) from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "NetworkGraph":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), path=path) from None
        return cls.from_dict(doc, path=path)


def fully_connected(layer_sizes: Sequence[int], weights=None, threshold=1.0, beta=1.0) -> NetworkGraph:
    """Flatten a layered feed-forward net into a :class:`NetworkGraph`.

    Layers occupy contiguous index blocks, inputs first. ``weights`` is a list
    of ``[fan_in, fan_out]`` matrices; if omitted every synapse gets weight 1.0.
    Zero-valued weights are kept as synapses.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ContractError("need at least two layers of positive size")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    pres, posts, ws = [], [], []
    for layer, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if weights is None:
            w = np.ones((a, b))
        else:
            w = np.asarray(weights[layer])
            if w.shape != (a, b):
                raise ContractError(f"layer {layer} weights have shape {w.shape}, expected {(a, b)}")
        ii, jj = np.meshgrid(np.arange(a), np.arange(b), indexing="ij")
        pres.append((ii + offsets[layer]).ravel())
        posts.append((jj + offsets[layer + 1]).ravel())
        ws.append(w.ravel())
    return NetworkGraph(
        int(offsets[-1]),
        np.concatenate(pres),
        np.concatenate(posts),
        np.concatenate(ws),
        tuple(range(sizes[0])),
        tuple(range(int(offsets[-2]), int(offsets[-1]))),
        threshold,
        beta,
    )


@dataclass
class NeuronStateVector:
    membranes: np.ndarray
    last_spikes: np.ndarray

    @classmethod
    def zeros(cls, net: NetworkGraph) -> "NeuronStateVector":
        dtype = np.int64 if net.is_integer else np.float64
        return cls(np.zeros(net.neuron_count, dtype=dtype), np.zeros(net.neuron_count, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class StimulusPlan:
    """Per-timestep injection values for each input neuron, shape ``(T, n_inputs)``."""

    injections: np.ndarray

    def __post_init__(self):
        inj = np.asarray(self.injections)
        if inj.ndim != 2:
            raise ContractError("injections must be a (T, n_inputs) array")
        if inj.shape[0] < 1:
            raise InputError("stimulus horizon must be at least 1")
        object.__setattr__(self, "injections", inj)

    @property
    def horizon(self) -> int:
        return self.injections.shape[0]

    @classmethod
    def zeros(cls, horizon: int, n_inputs: int, integer=True) -> "StimulusPlan":
        return cls(np.zeros((horizon, n_inputs), dtype=np.int64 if integer else np.float64))

    @classmethod
    def pulses(cls, horizon: int, n_inputs: int, events, value) -> "StimulusPlan":
        """Plan injecting ``value`` at each ``(timestep, input_slot)`` event (0-based)."""
        integer = isinstance(value, (int, np.integer))
        plan = np.zeros((horizon, n_inputs), dtype=np.int64 if integer else np.float64)
        for t, k in events:
            if not (0 <= t < horizon and 0 <= k < n_inputs):
                raise InputError(f"pulse ({t}, {k}) outside a ({horizon}, {n_inputs}) plan")
            plan[t, k] += value
        return cls(plan)

    def to_dict(self) -> dict:
        return {"format": "snntile-stimulus", "version": 1, "injections": self.injections.tolist()}

    @classmethod
    def from_dict(cls, doc: dict, path=None) -> "StimulusPlan":
        if "injections" not in doc:
            raise ParseError("stimulus document lacks 'injections'", path=path)
        arr = np.asarray(doc["injections"])
        if arr.dtype.kind == "f" and np.all(arr == np.round(arr)):
            arr = arr.astype(np.int64)
        return cls(arr)


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    spikes: np.ndarray        # (T, N) uint8
    output_words: np.ndarray  # (T, n_output_rows) uint16
    output_rows: tuple[int, ...] = ()
    membranes: np.ndarray | None = field(default=None)  # optional (T, N) trace

    @property
    def horizon(self) -> int:
        return self.spikes.shape[0]

    def spike_counts(self) -> np.ndarray:
        return self.spikes.sum(axis=0, dtype=np.int64)

    def spiking_sets(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.spikes]

    def __eq__(self, other):
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return (np.array_equal(self.spikes, other.spikes)
                and np.array_equal(self.output_words, other.output_words)
                and tuple(self.output_rows) == tuple(other.output_rows))

    __hash__ = None


def pack_output_words(spikes: np.ndarray, output_rows: Sequence[int]) -> np.ndarray:
    """Pack spikes of each output tile row into 16-bit words (slot k -> bit k)."""
    spikes = np.asarray(spikes)
    T, n = spikes.shape
    words = np.zeros((T, len(output_rows)), dtype=np.uint16)
    bits = (1 << np.arange(TILE)).astype(np.int64)
    for j, row in enumerate(output_rows):
        block = np.zeros((T, TILE), dtype=np.int64)
        lo, hi = row * TILE, min(row * TILE + TILE, n)
        block[:, : hi - lo] = spikes[:, lo:hi]
        words[:, j] = block @ bits
    return words


def rows_for(n: int) -> int:
    return math.ceil(n / TILE)
