import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_any_to_any, reference_if
from snntile.behavior import (behavioral_run, behavioral_step, classify_counts, classify_rate, count_synapses,
                              run_batch)
from snntile.compiler import quantize
from snntile.errors import ContractError, InputError
from snntile.network import NetworkGraph, NeuronStateVector, SpikeTrain, StimulusPlan, fully_connected
from snntile.parity import build_parity_network


def single(threshold, integer=False, beta=1.0):
    w = np.zeros(0, dtype=np.int64 if integer else np.float64)
    return NetworkGraph(1, [], [], w, (0,), (0,), threshold, beta)


def test_zero_state_zero_input_stays_silent():
    net = single(1.0)
    state, spikes = behavioral_step(net, NeuronStateVector.zeros(net), [0.0])
    assert spikes.tolist() == [0] and state.membranes.tolist() == [0.0]


def test_equality_fires_and_resets():
    net = single(1.0)
    state = NeuronStateVector(np.array([1.0]), np.zeros(1, dtype=np.uint8))
    state, spikes = behavioral_step(net, state, [0.0])
    assert spikes.tolist() == [1] and state.membranes.tolist() == [0.0]


def test_integer_period_is_ceil_threshold_over_input():
    net = single(2, integer=True)
    train = behavioral_run(net, StimulusPlan(np.ones((8, 1), dtype=np.int64)), "int")
    # 1-based steps 2, 4, 6, 8
    assert np.flatnonzero(train.spikes[:, 0]).tolist() == [1, 3, 5, 7]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 127), st.integers(1, 127), st.integers(1, 60))
def test_isi_property(V, I, T):
    net = single(V, integer=True)
    spikes = behavioral_run(net, StimulusPlan(np.full((T, 1), I, dtype=np.int64)), "int").spikes[:, 0]
    period = math.ceil(V / I)
    expect = [t for t in range(T) if (t + 1) % period == 0]
    assert np.flatnonzero(spikes).tolist() == expect


def test_one_step_synaptic_delay():
    net = NetworkGraph.from_edges(2, [(0, 1, 1.0)], [0], [1], 1.0)
    train = behavioral_run(net, StimulusPlan.pulses(3, 1, [(0, 0)], 1.0))
    assert train.spikes.tolist() == [[1, 0], [0, 1], [0, 0]]


def test_compare_happens_before_saturation():
    net = single(100, integer=True)
    train = behavioral_run(net, StimulusPlan(np.array([[90], [90], [300]])), "int", trace=True)
    assert train.spikes[:, 0].tolist() == [0, 1, 1]
    net = single(1000, integer=True)  # never fires; stored value clips
    train = behavioral_run(net, StimulusPlan(np.array([[200], [-300], [5]])), "int", trace=True)
    assert train.membranes[:, 0].tolist() == [127, -128, -123]


def test_conservation_without_spikes():
    net = single(1e9)
    inj = np.array([[0.5], [-0.25], [2.0], [0.125]])
    train = behavioral_run(net, StimulusPlan(inj), trace=True)
    assert np.allclose(train.membranes[:, 0], np.cumsum(inj[:, 0]))


def test_leak_in_float_mode():
    net = single(10.0, beta=0.5)
    train = behavioral_run(net, StimulusPlan(np.array([[4.0], [0.0], [0.0]])), trace=True)
    assert train.membranes[:, 0].tolist() == [4.0, 2.0, 1.0]


def test_t1_zero_injection_is_silent():
    net = build_parity_network()
    train = behavioral_run(net, StimulusPlan.zeros(1, 1, integer=False))
    assert not train.spikes.any() and not train.output_words.any()


def test_errors():
    net = single(1.0)
    with pytest.raises(ContractError):
        behavioral_step(net, NeuronStateVector(np.zeros(2), np.zeros(2, dtype=np.uint8)), [0.0])
    with pytest.raises(ContractError):
        behavioral_step(net, NeuronStateVector.zeros(net), [0.0, 1.0])
    with pytest.raises(InputError):
        behavioral_step(net, NeuronStateVector.zeros(net), [np.nan])
    with pytest.raises(InputError):
        behavioral_run(NetworkGraph(2, [0], [1], [np.inf], (0,), (1,), 1.0), StimulusPlan.zeros(2, 1))
    with pytest.raises(ContractError):
        behavioral_run(net, StimulusPlan.zeros(2, 1), mode="fixed")
    with pytest.raises(ContractError):
        behavioral_run(net, StimulusPlan.zeros(2, 1), mode="int")  # float weights


def test_count_synapses():
    assert count_synapses(fully_connected([784, 128, 10])) == 101632
    assert count_synapses(fully_connected([2, 2])) == 4
    assert count_synapses(build_parity_network()) == 10


def test_classify_rate_tie_breaks():
    def train_from_counts(counts):
        T = max(counts) or 1
        spikes = np.zeros((T, len(counts)), dtype=np.uint8)
        for k, c in enumerate(counts):
            spikes[:c, k] = 1
        return SpikeTrain(spikes, np.zeros((T, 0), dtype=np.uint16))

    assert classify_rate(train_from_counts([0, 0, 0]), [0, 1, 2]) == 0
    assert classify_rate(train_from_counts([0, 0, 0, 4]), [0, 1, 2, 3]) == 3
    assert classify_rate(train_from_counts([5, 9, 9, 1]), [0, 1, 2, 3]) == 1
    with pytest.raises(ContractError):
        classify_rate(train_from_counts([1]), [])


def test_classify_counts_matches_classify_rate():
    rng = np.random.default_rng(3)
    spikes = (rng.random((10, 7, 6)) < 0.4).astype(np.uint8)
    batch = classify_counts(spikes, [1, 3, 5])
    single_ = [classify_rate(SpikeTrain(s, np.zeros((7, 0), dtype=np.uint16)), [1, 3, 5]) for s in spikes]
    assert batch.tolist() == single_


@pytest.mark.parametrize("seed", range(15))
def test_run_matches_python_oracle(seed):
    rng = np.random.default_rng(seed)
    net = random_any_to_any(rng, n_max=24)
    T = 15
    inj = rng.uniform(-0.5, 1.5, size=(T, len(net.input_ids)))
    got = behavioral_run(net, StimulusPlan(inj)).spikes
    assert np.array_equal(got, reference_if(net.dense(), net.input_ids, inj, net.threshold, False))
    q = quantize(net).as_network()
    inj_q = rng.integers(-40, 200, size=(T, len(net.input_ids)))
    got = behavioral_run(q, StimulusPlan(inj_q), "int").spikes
    assert np.array_equal(got, reference_if(q.dense(), q.input_ids, inj_q, q.threshold, True))


def test_step_and_run_agree():
    rng = np.random.default_rng(11)
    net = quantize(random_any_to_any(rng, n_max=8)).as_network()
    inj = rng.integers(0, 150, size=(20, len(net.input_ids)))
    state = NeuronStateVector.zeros(net)
    stepped = []
    for t in range(20):
        state, s = behavioral_step(net, state, inj[t], "int")
        assert state.membranes.min() >= -128 and state.membranes.max() <= 127
        assert np.all(state.membranes[s == 1] == 0)
        stepped.append(s)
    run = behavioral_run(net, StimulusPlan(inj), "int")
    assert np.array_equal(np.array(stepped), run.spikes)
    assert run == behavioral_run(net, StimulusPlan(inj), "int")


def test_run_batch_equals_individual_runs():
    rng = np.random.default_rng(5)
    net = random_any_to_any(rng, n_max=30)
    inj = rng.uniform(0, 1.2, size=(4, 9, len(net.input_ids)))
    spikes, _, _ = run_batch(net, inj)
    for b in range(4):
        assert np.array_equal(spikes[b], behavioral_run(net, StimulusPlan(inj[b])).spikes)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_int_membranes_stay_in_int8(seed):
    rng = np.random.default_rng(seed)
    net = quantize(random_any_to_any(rng, n_max=20)).as_network()
    inj = rng.integers(-300, 300, size=(12, len(net.input_ids)))
    train = behavioral_run(net, StimulusPlan(inj), "int", trace=True)
    assert train.membranes.min() >= -128 and train.membranes.max() <= 127
    assert set(np.unique(train.spikes).tolist()) <= {0, 1}
    assert np.all(train.membranes[train.spikes == 1] == 0)
