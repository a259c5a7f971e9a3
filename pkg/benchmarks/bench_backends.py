"""Compare the numba and pure-numpy kernels on a fully connected network.

    python benchmarks/bench_backends.py --layers 784 128 10 --timesteps 100 --images 8

Prints per-image host time for the cycle simulator and the integer
behavioral run under each backend, plus the modelled accelerator time.
Spike trains from both backends are checked for equality before timing.
"""
import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from snntile.behavior import run_batch
from snntile.compiler import compile_network
from snntile.cyclesim import estimate_throughput, simulate
from snntile.datasets import encode_batch
from snntile.network import StimulusPlan
from snntile.trainer import LayeredSpec, init_weights


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", type=int, nargs="+", default=[784, 128, 10])
    ap.add_argument("--timesteps", type=int, default=100)
    ap.add_argument("--images", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="also write the results as JSON")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    spec = LayeredSpec(tuple(args.layers), threshold=0.5)
    qnet, program = compile_network(spec.to_graph(init_weights(spec, rng)))
    inet = qnet.as_network()
    pixels = rng.integers(0, 256, size=(args.images, args.layers[0]))
    inj = encode_batch(pixels, args.timesteps, max(1, program.threshold_q // 2))

    ref = {be: simulate(program, StimulusPlan(inj[0]), backend=be).spikes for be in ("numba", "numpy")}
    if ref["numba"] != ref["numpy"]:
        sys.exit("backends disagree")

    rows = {}
    for be in ("numba", "numpy"):
        run_batch(inet, inj[:1], "int", backend=be)  # JIT warm-up
        sim = best_of(lambda: [simulate(program, StimulusPlan(x), backend=be) for x in inj], args.repeats)
        beh = best_of(lambda: run_batch(inet, inj, "int", backend=be), args.repeats)
        rows[be] = {"cycle_sim_ms_per_image": 1e3 * sim / args.images,
                    "behavioral_ms_per_image": 1e3 * beh / args.images}

    est = estimate_throughput(program, args.timesteps)
    print(f"network {'-'.join(map(str, args.layers))}: {len(program)} tiles, T={args.timesteps}, "
          f"modelled {est.ms_per_inference:.4f} ms/inference at 100 MHz")
    print(f"{'backend':<8} {'cycle sim ms/img':>18} {'behavioral ms/img':>18}")
    for be, r in rows.items():
        print(f"{be:<8} {r['cycle_sim_ms_per_image']:>18.3f} {r['behavioral_ms_per_image']:>18.3f}")
    for key in ("cycle_sim_ms_per_image", "behavioral_ms_per_image"):
        print(f"numba speedup ({key.split('_ms')[0]}): {rows['numpy'][key] / rows['numba'][key]:.1f}x")
    if args.out:
        Path(args.out).write_text(json.dumps({"layers": args.layers, "tiles": len(program), "host": rows},
                                             indent=2) + "\n")


if __name__ == "__main__":
    main()
