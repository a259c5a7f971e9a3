"""Post-training int8 quantization and 16x16 tile partitioning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CompileError, ContractError
from .network import TILE, NetworkGraph, rows_for

HORIZON_CAP = 128
MAX_OUTPUT_TILES = 4
WEIGHT_MAX = 127


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True, eq=False)
class QuantizedNetwork:
    neuron_count: int
    pre: np.ndarray
    post: np.ndarray
    weight: np.ndarray   # int8 values in [-127, 127]
    scale: float
    threshold_q: int
    input_ids: tuple[int, ...]
    output_ids: tuple[int, ...]

    def as_network(self) -> NetworkGraph:
        """Integer :class:`NetworkGraph` for the behavioral simulator."""
        return NetworkGraph(self.neuron_count, self.pre, self.post, self.weight.astype(np.int64),
                            self.input_ids, self.output_ids, int(self.threshold_q), 1.0)

    def dequantized(self) -> np.ndarray:
        return self.weight.astype(np.float64) / self.scale


def quantize(net: NetworkGraph) -> QuantizedNetwork:
    """Symmetric per-network int8: ``scale = 127 / max|w|``, round half away from zero."""
    if net.beta != 1.0:
        raise CompileError("hardware neurons have no leak; quantize needs beta == 1")
    w = np.asarray(net.weight, dtype=np.float64)
    peak = float(np.max(np.abs(w))) if len(w) else 0.0
    if peak == 0.0 or not np.isfinite(peak):
        raise CompileError("cannot derive a scale from all-zero (or non-finite) weights")
    scale = WEIGHT_MAX / peak
    q = np.clip(round_half_away(w * scale), -WEIGHT_MAX, WEIGHT_MAX).astype(np.int8)
    threshold_q = max(1, int(round_half_away(net.threshold * scale)))
    return QuantizedNetwork(net.neuron_count, net.pre.copy(), net.post.copy(), q, scale, threshold_q,
                            net.input_ids, net.output_ids)


def quantize_injection(values, scale: float) -> np.ndarray:
    """Map float injections into the integer domain of a quantized network."""
    return round_half_away(np.asarray(values) * scale).astype(np.int64)


@dataclass(frozen=True)
class Tile:
    tile_idx_x: int
    tile_idx_y: int
    weights: np.ndarray  # (16, 16) int8, [pre_slot, post_slot]


@dataclass(frozen=True, eq=False)
class TileProgram:
    tile_x: np.ndarray      # (K,) presynaptic tile index
    tile_y: np.ndarray      # (K,) postsynaptic tile index
    weights: np.ndarray     # (K, 16, 16) int8
    neuron_count: int
    output_tile_ids: tuple[int, ...]
    threshold_q: int
    scale: float
    input_ids: tuple[int, ...] = ()
    output_ids: tuple[int, ...] = ()
    horizon_cap: int = HORIZON_CAP

    def __post_init__(self):
        tx = np.asarray(self.tile_x, dtype=np.int64).reshape(-1)
        ty = np.asarray(self.tile_y, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.int8).reshape(-1, TILE, TILE)
        if not (len(tx) == len(ty) == len(w)):
            raise ContractError("tile index and weight arrays disagree in length")
        object.__setattr__(self, "tile_x", tx)
        object.__setattr__(self, "tile_y", ty)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "output_tile_ids", tuple(int(i) for i in self.output_tile_ids))
        object.__setattr__(self, "input_ids", tuple(int(i) for i in self.input_ids))
        object.__setattr__(self, "output_ids", tuple(int(i) for i in self.output_ids))
        if len(self.output_tile_ids) > MAX_OUTPUT_TILES:
            raise CompileError(f"{len(self.output_tile_ids)} output tile rows exceed the limit of {MAX_OUTPUT_TILES}")

    def __len__(self):
        return len(self.tile_x)

    @property
    def n_rows(self) -> int:
        return rows_for(self.neuron_count)

    @property
    def tiles(self) -> list[Tile]:
        return [Tile(int(x), int(y), w) for x, y, w in zip(self.tile_x, self.tile_y, self.weights)]

    def is_sorted(self) -> bool:
        keys = list(zip(self.tile_y.tolist(), self.tile_x.tolist()))
        return keys == sorted(keys)

    def distinct_rows(self) -> list[int]:
        return sorted(set(self.tile_y.tolist()))

    def nonzero_slots(self) -> int:
        return int(np.count_nonzero(self.weights))

    def synapses(self):
        """Recover ``(pre, post, weight)`` arrays of every nonzero slot."""
        k, i, j = np.nonzero(self.weights)
        return self.tile_x[k] * TILE + i, self.tile_y[k] * TILE + j, self.weights[k, i, j].astype(np.int64)

    def as_network(self) -> NetworkGraph:
        pre, post, w = self.synapses()
        return NetworkGraph(self.neuron_count, pre, post, w, self.input_ids, self.output_ids,
                            int(self.threshold_q), 1.0)

    def __eq__(self, other):
        if not isinstance(other, TileProgram):
            return NotImplemented
        return (np.array_equal(self.tile_x, other.tile_x)
                and np.array_equal(self.tile_y, other.tile_y)
                and np.array_equal(self.weights, other.weights)
                and self.neuron_count == other.neuron_count
                and self.output_tile_ids == other.output_tile_ids
                and self.threshold_q == other.threshold_q
                and self.scale == other.scale
                and self.input_ids == other.input_ids
                and self.output_ids == other.output_ids
                and self.horizon_cap == other.horizon_cap)

    __hash__ = None


def output_tile_rows(output_ids) -> tuple[int, ...]:
    return tuple(sorted({int(i) // TILE for i in output_ids}))


def tile_partition(qnet: QuantizedNetwork) -> TileProgram:
    """Group nonzero synapses into 16x16 tiles sorted by (tile_idx_y, tile_idx_x)."""
    if qnet.neuron_count < 1:
        raise ContractError("neuron_count must be positive")
    out_rows = output_tile_rows(qnet.output_ids)
    if len(out_rows) > MAX_OUTPUT_TILES:
        raise CompileError(f"output neurons span {len(out_rows)} tile rows; the output memory holds {MAX_OUTPUT_TILES}")
    if rows_for(qnet.neuron_count) > 1 << 16:
        raise CompileError("tile index does not fit in 16 bits")

    nz = qnet.weight != 0
    pre, post, w = qnet.pre[nz], qnet.post[nz], qnet.weight[nz]
    tx, ty = pre // TILE, post // TILE
    n_rows = rows_for(qnet.neuron_count)
    key = ty * n_rows + tx  # sorts by y then x
    uniq, tile_of = np.unique(key, return_inverse=True)
    weights = np.zeros((len(uniq), TILE, TILE), dtype=np.int8)
    weights[tile_of, pre % TILE, post % TILE] = w
    return TileProgram(uniq % n_rows, uniq // n_rows, weights, qnet.neuron_count, out_rows,
                       int(qnet.threshold_q), float(qnet.scale), qnet.input_ids, qnet.output_ids)


def compile_network(net: NetworkGraph) -> tuple[QuantizedNetwork, TileProgram]:
    q = quantize(net)
    return q, tile_partition(q)
