"""Spiking-network toolchain: surrogate-gradient training, int8 tile compilation,
memory-image emission and a cycle-accurate model of a tile-streaming accelerator."""
from .behavior import behavioral_run, behavioral_step, classify_counts, classify_rate, count_synapses, run_batch
from .compiler import QuantizedNetwork, Tile, TileProgram, compile_network, quantize, tile_partition
from .cyclesim import (CycleReport, PipelineConfig, SimulationResult, ThroughputEstimate, estimate_throughput,
                       simulate, simulate_image)
from .errors import (CompileError, ContractError, InputError, ParseError, SimulationFault, SNNError, StageError,
                     TrainingError)
from .memimage import MemoryImage, emit_c_array, emit_mem, parse_mem
from .network import NetworkGraph, NeuronStateVector, SpikeTrain, StimulusPlan, fully_connected
from .pipeline import RunManifest, bench, run_pipeline
from .trainer import (LayeredSpec, TrainConfig, TrainResult, bptt_grad, finite_diff_check, surrogate_grad,
                      surrogate_forward, train)

__version__ = "0.1.0"
