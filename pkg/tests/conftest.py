import os
from pathlib import Path

import numpy as np
import pytest

from snntile.compiler import TileProgram
from snntile.network import NetworkGraph, StimulusPlan


def random_any_to_any(rng, n_max=64, density=None, n_inputs=None, integer_ready=True):
    """Random recurrent network: self-loops, back edges and cross-row edges all allowed."""
    n = int(rng.integers(2, n_max + 1))
    density = density if density is not None else rng.uniform(0.05, 0.4)
    mask = rng.random((n, n)) < density
    pre, post = np.nonzero(mask)
    w = rng.uniform(-1.0, 1.0, size=len(pre))
    if len(w) == 0:
        pre, post, w = np.array([0]), np.array([n - 1]), np.array([0.7])
    k_in = n_inputs or int(rng.integers(1, min(n, 8) + 1))
    inputs = tuple(sorted(rng.choice(n, k_in, replace=False).tolist()))
    # outputs stay inside the first four tile rows (the output memory limit)
    pool = min(n, 64)
    outputs = tuple(sorted(rng.choice(pool, int(rng.integers(1, min(pool, 10) + 1)), replace=False).tolist()))
    threshold = float(rng.uniform(0.3, 1.5))
    return NetworkGraph(n, pre, post, w, inputs, outputs, threshold)


def random_int_stimulus(rng, n_inputs, T, hi):
    """Sparse-ish integer injections in [-hi/4, hi]."""
    inj = rng.integers(-max(1, hi // 4), hi + 1, size=(T, n_inputs))
    inj[rng.random(inj.shape) < 0.5] = 0
    return StimulusPlan(inj.astype(np.int64))


def random_program(rng, max_rows=12, max_tiles=20):
    """Arbitrary valid TileProgram, not necessarily produced by the compiler."""
    rows = int(rng.integers(1, max_rows + 1))
    neuron_count = int(rng.integers(16 * (rows - 1) + 1, 16 * rows + 1))
    k = int(rng.integers(0, min(max_tiles, rows * rows) + 1))
    flat = np.sort(rng.choice(rows * rows, k, replace=False))
    ty, tx = flat // rows, flat % rows
    w = rng.integers(-127, 128, size=(k, 16, 16)).astype(np.int8)
    w[rng.random(w.shape) < 0.3] = 0
    outputs = tuple(sorted(rng.choice(neuron_count, int(rng.integers(1, min(4, neuron_count) + 1)),
                                      replace=False).tolist()))
    out_rows = tuple(sorted({o // 16 for o in outputs}))
    inputs = tuple(sorted(rng.choice(neuron_count, int(rng.integers(0, min(5, neuron_count) + 1)),
                                     replace=False).tolist()))
    return TileProgram(tx, ty, w, neuron_count, out_rows, int(rng.integers(1, 300)),
                       float(rng.uniform(1, 500)), inputs, outputs)


def reference_if(weights_dense, input_ids, injections, threshold, integer):
    """Plain-python per-neuron IF loop used as an oracle for the simulators."""
    n = weights_dense.shape[0]
    T = injections.shape[0]
    v = [0] * n if integer else [0.0] * n
    last = [0] * n
    out = np.zeros((T, n), dtype=np.uint8)
    for t in range(T):
        cur = [0] * n if integer else [0.0] * n
        for i in range(n):
            if last[i]:
                for j in range(n):
                    if weights_dense[i, j] != 0:
                        cur[j] += weights_dense[i, j]
        for k, nid in enumerate(input_ids):
            cur[nid] += injections[t, k]
        new_last = [0] * n
        for j in range(n):
            u = v[j] + cur[j]
            if u >= threshold:
                new_last[j] = 1
                v[j] = 0
            else:
                v[j] = min(127, max(-128, u)) if integer else u
        last = new_last
        out[t] = new_last
    return out


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """MNIST IDX directory: SNNTILE_MNIST_DIR if set, else the bundled 5k sample split 1000/1000."""
    env = os.environ.get("SNNTILE_MNIST_DIR")
    if env:
        return Path(env)
    from snntile.datasets import export_bundled_mnist

    try:
        return export_bundled_mnist(tmp_path_factory.mktemp("mnist"))
    except FileNotFoundError as exc:
        pytest.skip(str(exc))
