import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_any_to_any, random_int_stimulus
from snntile.behavior import behavioral_run
from snntile.compiler import TileProgram, compile_network
from snntile.cyclesim import (NeuronArrayState, PipelineConfig, SpikeMemory, build_schedule, crossbar,
                              crossbar_column_sum, estimate_throughput, neuron_unit_step, simulate, simulate_image)
from snntile.errors import ContractError, InputError, SimulationFault
from snntile.memimage import emit_mem
from snntile.network import StimulusPlan, fully_connected
from snntile.parity import build_parity_network, parity_stimulus


@pytest.fixture(scope="module")
def parity_program():
    return compile_network(build_parity_network())[1]


@pytest.fixture(scope="module")
def mnist_program():
    return compile_network(fully_connected([784, 128, 10]))[1]


def test_crossbar_examples():
    assert crossbar_column_sum(0, np.arange(16))[0] == 0
    assert crossbar_column_sum(0xFFFF, np.full(16, 127))[0] == 2032
    assert crossbar_column_sum(0xFFFF, np.full(16, -127))[0] == -2032
    w = np.arange(-8, 8)
    for i in range(16):
        assert crossbar_column_sum(1 << i, w)[0] == w[i]


@settings(max_examples=100)
@given(st.integers(0, 0xFFFF), st.lists(st.integers(-127, 127), min_size=16, max_size=16), st.integers(1, 8))
def test_crossbar_matches_dot_product(word, w, latency):
    bits = [(word >> i) & 1 for i in range(16)]
    value, stages = crossbar_column_sum(word, w, latency)
    assert value == sum(b * x for b, x in zip(bits, w))
    assert len(stages) == latency


def test_crossbar_tile_columns():
    rng = np.random.default_rng(0)
    tile = rng.integers(-127, 128, size=(16, 16))
    word = 0b1010_0000_1100_0001
    assert crossbar(word, tile).tolist() == [crossbar_column_sum(word, tile[:, j])[0] for j in range(16)]


def test_neuron_unit_examples():
    st_ = NeuronArrayState()
    word, mem = neuron_unit_step(st_, np.zeros(16), np.zeros(16), True, 10)
    assert word == 0 and not mem.any()

    st_ = NeuronArrayState()
    sums = np.zeros(16, dtype=int)
    sums[4] = 10
    assert neuron_unit_step(st_, sums, np.zeros(16), False, 10) is None
    word, mem = neuron_unit_step(st_, np.zeros(16), np.zeros(16), True, 10)
    assert word == 1 << 4 and mem[4] == 0
    assert not st_.accumulators.any()

    st_ = NeuronArrayState()
    word, mem = neuron_unit_step(st_, np.full(16, 300), np.zeros(16), True, 400)
    assert word == 0 and np.all(mem == 127)
    word, mem = neuron_unit_step(st_, np.full(16, -300), np.zeros(16), True, 400, membrane_in=np.zeros(16))
    assert np.all(mem == -128)


def test_spike_memory_double_buffer():
    m = SpikeMemory(2)
    m.write(1, 0xBEEF)
    assert m.read(1) == 0  # not visible until the swap
    m.swap()
    assert m.read(1) == 0xBEEF
    m.swap()
    assert m.read(1) == 0


@pytest.mark.parametrize("gap,first,second,T,spike_t", [("even", 1, 3, 4, [3]), ("odd", 1, 4, 5, [])])
def test_parity_output_words(parity_program, gap, first, second, T, spike_t):
    res = simulate(parity_program, parity_stimulus(first, second, T, parity_program.threshold_q))
    # neuron 16 is slot 0 of tile row 1
    assert res.spikes.output_rows == (1,)
    assert np.flatnonzero(res.spikes.output_words[:, 0] & 1).tolist() == spike_t
    assert np.array_equal(res.output_memory, res.spikes.output_words)


def test_parity_cycle_accounting(parity_program):
    res = simulate(parity_program, parity_stimulus(1, 3, 4, 127))
    cfg = PipelineConfig()
    assert res.report.cycles_per_timestep == [2 + cfg.overhead_cycles] * 4
    assert res.report.reset_events == [2] * 4
    assert res.report.tiles_streamed == 8
    assert res.report.stall_cycles == 0


def test_mnist_network_timing(mnist_program):
    stim = StimulusPlan(np.random.default_rng(0).integers(0, 64, size=(100, 784)))
    res = simulate(mnist_program, stim)
    rep = res.report
    assert rep.tiles_streamed == 400 * 100
    assert rep.total_cycles >= 40_000
    assert 0.40 <= rep.ms_per_inference <= 0.68
    est = estimate_throughput(mnist_program, 100)
    assert abs(est.cycles - rep.total_cycles) / rep.total_cycles <= 0.01
    assert est.ms_per_inference >= 0.40
    sched = build_schedule(mnist_program)
    assert rep.reset_events == [len(sched.rows)] * 100


def test_empty_program_costs_only_overhead():
    p = TileProgram([], [], np.zeros((0, 16, 16)), 16, (0,), 5, 1.0)
    res = simulate(p, StimulusPlan.zeros(1, 0))
    assert res.report.total_cycles == PipelineConfig().overhead_cycles
    assert not res.spikes.spikes.any()
    assert estimate_throughput(p, 1).cycles == PipelineConfig().overhead_cycles


def test_injection_only_rows_fire_inputs():
    # an input neuron with no synapses at all still integrates its injection
    p = TileProgram([], [], np.zeros((0, 16, 16)), 20, (1,), 5, 1.0, (17,), (17,))
    res = simulate(p, StimulusPlan(np.array([[3], [3], [3], [3]])))
    assert res.spikes.spikes[:, 17].tolist() == [0, 1, 0, 1]


def test_horizon_cap_and_fifo_faults(parity_program):
    with pytest.raises(InputError):
        simulate(parity_program, StimulusPlan.zeros(129, 1))
    _, p = compile_network(fully_connected([32, 32, 32]))  # 8 tiles
    stim = StimulusPlan.zeros(2, 32)
    # occupancy equals the latency being covered once the stream is long enough
    assert simulate(p, stim).report.peak_sideband_fifo == 5
    assert simulate(p, stim, PipelineConfig(fifo_depth=5)).report.peak_weight_fifo == 1
    with pytest.raises(SimulationFault, match="sideband"):
        simulate(p, stim, PipelineConfig(fifo_depth=4))
    with pytest.raises(SimulationFault, match="weight"):
        simulate(p, stim, PipelineConfig(fifo_depth=2, bram_latency=3, adder_tree_latency=2))
    with pytest.raises(ContractError):
        PipelineConfig(tile_dim=8)
    with pytest.raises(ContractError):
        PipelineConfig(max_timesteps=200)


def test_latency_changes_cycles_not_spikes(parity_program):
    stim = parity_stimulus(1, 3, 4, 127)
    base = simulate(parity_program, stim)
    slow = simulate(parity_program, stim, PipelineConfig(adder_tree_latency=7, bram_latency=2))
    assert slow.spikes == base.spikes
    assert slow.report.total_cycles == base.report.total_cycles + 4 * 3


def test_simulate_from_image_and_dumps(tmp_path, parity_program):
    emit_mem(parity_program, tmp_path / "img")
    res = simulate_image(tmp_path / "img", parity_stimulus(1, 3, 4, 127))
    res.dump_output_memory(tmp_path / "out.hex")
    assert (tmp_path / "out.hex").read_text().splitlines() == ["0000", "0000", "0000", "0001"]
    res.report.save(tmp_path / "rep.json")
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert doc["total_cycles"] == res.report.total_cycles and doc["ms_per_inference"] > 0


def test_report_determinism(parity_program):
    stim = parity_stimulus(1, 4, 5, 127)
    a, b = simulate(parity_program, stim), simulate(parity_program, stim)
    assert a.report == b.report and a.spikes == b.spikes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_equivalence_property(seed):
    rng = np.random.default_rng(seed)
    net = random_any_to_any(rng)
    q, p = compile_network(net)
    stim = random_int_stimulus(rng, len(net.input_ids), int(rng.integers(1, 33)), 2 * q.threshold_q)
    res = simulate(p, stim)
    ref = behavioral_run(q.as_network(), stim, "int")
    assert res.spikes == ref
    assert np.array_equal(res.output_memory, ref.output_words)
    rep = res.report
    assert rep.tiles_streamed <= rep.total_cycles
    assert rep.reset_events == [len(build_schedule(p).rows)] * stim.horizon
    assert estimate_throughput(p, stim.horizon).cycles == rep.total_cycles
