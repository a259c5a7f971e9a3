"""Cycle-accurate model of the tile-streaming accelerator.

Per timestep the control unit issues one schedule slot per clock. A slot is
either a compiled tile or, for tile rows that hold input neurons but receive
no synapses, an injection-only bubble that still visits the neuron array.
The datapath is::

    index BRAM (bram_latency) -> operand fetch (spike bank, membranes)
      -> crossbar + pipelined adder tree (adder_tree_latency)
      -> neuron array (accumulate; on RESET compare/fire/write back)

Weights are read in the issue cycle and wait in a FIFO until the index read
returns. The RESET sideband and membrane operands travel through a second
FIFO alongside the adder tree. A timestep ends with a fixed drain and one
bank-swap cycle, so every timestep costs ``slots + bram_latency +
adder_tree_latency + 3`` clocks.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .compiler import HORIZON_CAP, MAX_OUTPUT_TILES, TileProgram
from .errors import ContractError, InputError, SimulationFault
from .memimage import MemoryImage
from .network import TILE, SpikeTrain, StimulusPlan

TREE_LEVELS = 4  # log2(16)
INT8_MIN, INT8_MAX = -128, 127
FIXED_OVERHEAD = 3  # fetch register, writeback commit, bank swap


@dataclass(frozen=True)
class PipelineConfig:
    tile_dim: int = TILE
    adder_tree_latency: int = 5
    fifo_depth: int = 8
    clock_hz: float = 100e6
    max_timesteps: int = HORIZON_CAP
    max_output_tiles: int = MAX_OUTPUT_TILES
    bram_latency: int = 1

    def __post_init__(self):
        if self.tile_dim != TILE:
            raise ContractError("tile_dim is fixed at 16")
        if not 1 <= self.max_timesteps <= HORIZON_CAP:
            raise ContractError(f"max_timesteps must lie in [1, {HORIZON_CAP}]")
        if self.adder_tree_latency < 1 or self.bram_latency < 1 or self.fifo_depth < 0:
            raise ContractError("latencies must be >= 1 and fifo_depth >= 0")
        if self.clock_hz <= 0:
            raise ContractError("clock_hz must be positive")

    @property
    def overhead_cycles(self) -> int:
        """Clocks per timestep beyond one per issued slot."""
        return self.bram_latency + self.adder_tree_latency + FIXED_OVERHEAD

    def tree_levels(self) -> np.ndarray:
        """Adder levels performed by each tree stage (extra stages are registers)."""
        A = self.adder_tree_latency
        levels = np.zeros(A, dtype=np.int64)
        for lv in range(TREE_LEVELS):
            levels[lv * A // TREE_LEVELS if A < TREE_LEVELS else lv] += 1
        return levels


@dataclass
class CycleReport:
    total_cycles: int
    cycles_per_timestep: list
    tiles_streamed: int
    slots_streamed: int
    stall_cycles: int
    reset_events: list
    peak_weight_fifo: int
    peak_sideband_fifo: int
    clock_hz: float

    @property
    def wall_time_s(self) -> float:
        return self.total_cycles / self.clock_hz

    @property
    def ms_per_inference(self) -> float:
        return 1e3 * self.wall_time_s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wall_time_s"] = self.wall_time_s
        d["ms_per_inference"] = self.ms_per_inference
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class Schedule:
    tile: np.ndarray  # tile index, -1 for an injection-only slot
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.tile)

    @property
    def rows(self) -> list[int]:
        return sorted(set(self.y.tolist()))


def build_schedule(program: TileProgram) -> Schedule:
    """Merge compiled tiles with injection-only slots for input rows lacking tiles."""
    tile_rows = set(program.tile_y.tolist())
    extra = sorted({i // TILE for i in program.input_ids} - tile_rows)
    entries = [(int(y), 0, int(x), k) for k, (x, y) in enumerate(zip(program.tile_x, program.tile_y))]
    entries += [(y, -1, 0, -1) for y in extra]
    entries.sort()
    if not entries:
        empty = np.zeros(0, dtype=np.int64)
        return Schedule(empty, empty.copy(), empty.copy())
    y, _, x, k = (np.asarray(col, dtype=np.int64) for col in zip(*entries))
    return Schedule(k, x, y)


# -- datapath building blocks ---------------------------------------------------

def reduce_pairs(partials: np.ndarray, levels: int) -> np.ndarray:
    """Apply ``levels`` rounds of pairwise adds along the last axis."""
    for _ in range(int(levels)):
        partials = partials[..., 0::2] + partials[..., 1::2]
    return partials


def crossbar_column_sum(spike_word: int, column_weights, latency: int = 5):
    """Sum of ``w[i]`` over set bits ``i`` of ``spike_word``, via the adder tree.

    Returns ``(value, per_stage_partials)``; the partials list has one entry
    per pipeline stage so the modelled latency is observable.
    """
    w = np.asarray(column_weights, dtype=np.int64)
    if w.shape != (TILE,):
        raise ContractError("a crossbar column has 16 weights")
    bits = (int(spike_word) >> np.arange(TILE)) & 1
    partial = np.where(bits == 1, w, 0)
    levels = PipelineConfig(adder_tree_latency=latency).tree_levels()
    stages = []
    for lv in levels:
        partial = reduce_pairs(partial, lv)
        stages.append(partial.copy())
    return int(partial[0]), stages


def crossbar(spike_word: int, tile_weights) -> np.ndarray:
    """All 16 column sums of one tile (combinational view)."""
    w = np.asarray(tile_weights, dtype=np.int64)
    bits = ((int(spike_word) >> np.arange(TILE)) & 1).astype(np.int64)
    return bits @ w


@dataclass
class NeuronArrayState:
    accumulators: np.ndarray = field(default_factory=lambda: np.zeros(TILE, dtype=np.int64))
    membranes: np.ndarray = field(default_factory=lambda: np.zeros(TILE, dtype=np.int64))
    active_row: int = -1


def neuron_unit_step(state: NeuronArrayState, column_sums, injection, reset: bool, threshold_q: int,
                     membrane_in=None, lo=INT8_MIN, hi=INT8_MAX):
    """Accumulate one tile's column sums; on RESET fire and return the writeback.

    Returns ``None`` without a reset, else ``(spike_word, membranes_out)``.
    ``membrane_in`` defaults to ``state.membranes``.
    """
    state.accumulators += np.asarray(column_sums, dtype=np.int64) + np.asarray(injection, dtype=np.int64)
    if not reset:
        return None
    m_in = state.membranes if membrane_in is None else np.asarray(membrane_in, dtype=np.int64)
    total = m_in + state.accumulators
    fired = total >= threshold_q
    out = np.where(fired, 0, np.clip(total, lo, hi)).astype(np.int64)
    word = int((fired.astype(np.int64) << np.arange(TILE)).sum())
    state.accumulators[:] = 0
    state.membranes = out.copy()
    return word, out


@dataclass
class SpikeMemory:
    """Double-buffered spike words; reads hit the bank written last timestep."""

    n_rows: int
    banks: np.ndarray = None
    current: int = 0

    def __post_init__(self):
        if self.banks is None:
            self.banks = np.zeros((2, self.n_rows), dtype=np.int64)

    def read(self, row: int) -> int:
        return int(self.banks[self.current, row])

    def write(self, row: int, word: int) -> None:
        self.banks[1 - self.current, row] = word

    def swap(self) -> None:
        self.current = 1 - self.current
        self.banks[1 - self.current] = 0


# -- simulation -------------------------------------------------------------------

def _words_to_spikes(words: np.ndarray, n: int) -> np.ndarray:
    T, R = words.shape
    bits = (words[:, :, None] >> np.arange(TILE)) & 1
    return bits.reshape(T, R * TILE)[:, :n].astype(np.uint8)


def _injection_grid(program: TileProgram, stim: StimulusPlan) -> np.ndarray:
    inj = np.asarray(stim.injections)
    if inj.shape[1] != len(program.input_ids):
        raise ContractError(f"stimulus has {inj.shape[1]} inputs, program expects {len(program.input_ids)}")
    if inj.dtype.kind == "f":
        if not np.all(inj == np.round(inj)):
            raise InputError("the accelerator takes integer injections")
    grid = np.zeros((inj.shape[0], program.n_rows * TILE), dtype=np.int64)
    grid[:, list(program.input_ids)] = inj.astype(np.int64)
    return grid.reshape(inj.shape[0], program.n_rows, TILE)


@dataclass
class SimulationResult:
    spikes: SpikeTrain
    report: CycleReport
    output_memory: np.ndarray  # (T, n_output_tiles) 16-bit words
    final_membranes: np.ndarray

    def dump_output_memory(self, path) -> None:
        """One 16-bit hex word per line, timestep-major."""
        Path(path).write_text("".join(f"{int(w):04X}\n" for w in self.output_memory.reshape(-1)))


def simulate(program: TileProgram, stim: StimulusPlan, cfg: PipelineConfig | None = None,
             image: MemoryImage | None = None, backend=None) -> SimulationResult:
    """Run ``stim`` through the cycle model of ``program``."""
    cfg = cfg or PipelineConfig()
    T = stim.horizon
    if T > cfg.max_timesteps or T > program.horizon_cap:
        raise InputError(f"horizon {T} exceeds the {min(cfg.max_timesteps, program.horizon_cap)}-timestep cap")
    if len(program.output_tile_ids) > cfg.max_output_tiles:
        raise SimulationFault("more output tile rows than the output memory holds")
    sched = build_schedule(program)
    R = program.n_rows
    out_ord = np.full(R, -1, dtype=np.int64)
    for j, row in enumerate(program.output_tile_ids):
        out_ord[row] = j
    mem0 = image.initial_membranes(R) if image is not None else np.zeros((R, TILE), dtype=np.int8)
    inj = _injection_grid(program, stim)

    words, out_mem, cycles, resets, issued, stalls, status, mem = kernels.pipeline(backend).run(
        sched, program.weights, inj, mem0, program.threshold_q, out_ord,
        len(program.output_tile_ids), cfg, cfg.tree_levels(), INT8_MIN, INT8_MAX)
    code = int(status[0])
    if code == 1:
        raise SimulationFault(f"weight FIFO overflow at timestep {status[1]}, cycle {status[2]} "
                              f"(depth {cfg.fifo_depth} < bram_latency {cfg.bram_latency})")
    if code == 2:
        raise SimulationFault(f"sideband FIFO overflow at timestep {status[1]}, cycle {status[2]} "
                              f"(depth {cfg.fifo_depth} < adder_tree_latency {cfg.adder_tree_latency})")
    if code:
        raise SimulationFault(f"internal pipeline inconsistency (code {code}) at timestep {status[1]}")

    spikes = _words_to_spikes(words, program.neuron_count)
    rows = tuple(program.output_tile_ids)
    out_words = words[:, list(rows)].astype(np.uint16) if rows else np.zeros((T, 0), dtype=np.uint16)
    train = SpikeTrain(spikes, out_words, rows)
    report = CycleReport(
        total_cycles=int(cycles.sum()),
        cycles_per_timestep=cycles.tolist(),
        tiles_streamed=int(issued.sum()),
        slots_streamed=len(sched) * T,
        stall_cycles=int(stalls.sum()),
        reset_events=resets.tolist(),
        peak_weight_fifo=int(status[3]),
        peak_sideband_fifo=int(status[4]),
        clock_hz=cfg.clock_hz,
    )
    return SimulationResult(train, report, out_mem.astype(np.uint16), mem.astype(np.int8))


def simulate_image(image_dir, stim: StimulusPlan, cfg: PipelineConfig | None = None, backend=None):
    image = MemoryImage.read(image_dir)
    return simulate(image.to_program(), stim, cfg, image=image, backend=backend)


@dataclass(frozen=True)
class ThroughputEstimate:
    cycles: int
    cycles_per_timestep: int
    seconds: float

    @property
    def ms_per_inference(self) -> float:
        return 1e3 * self.seconds


def estimate_throughput(program: TileProgram, T: int, cfg: PipelineConfig | None = None) -> ThroughputEstimate:
    """Closed-form cycle count: one slot per clock plus the per-timestep drain."""
    cfg = cfg or PipelineConfig()
    per_step = len(build_schedule(program)) + cfg.overhead_cycles
    cycles = int(T) * per_step
    return ThroughputEstimate(cycles, per_step, cycles / cfg.clock_hz)
