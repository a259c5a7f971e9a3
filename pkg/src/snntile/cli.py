"""``snntile`` command line: train, compile, simulate, run, parity-demo, bench."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError, SNNError
from .network import NetworkGraph, StimulusPlan

log = logging.getLogger("snntile")


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _layer_sizes(values) -> tuple[int, ...]:
    """Accept ``784,32,10`` as well as ``784 32 10``."""
    try:
        return tuple(int(v) for item in values for v in item.split(",") if v)
    except ValueError:
        raise InputError(f"--spec expects integers, got {' '.join(values)!r}") from None


def cmd_train(args) -> int:
    from .datasets import find_mnist
    from .pipeline import DEFAULT_TRAIN_THRESHOLD
    from .trainer import LayeredSpec, TrainConfig, pixel_injections, temporal_xor_task, train

    if args.task == "xor":
        layers = _layer_sizes(args.spec) if args.spec else (2, 4, 2)
        spec = LayeredSpec(layers, threshold=args.threshold or 1.0, horizon=args.timesteps or 16)
        inj, labels = temporal_xor_task(spec.threshold, spec.horizon)
        lr, batch = args.lr or 0.5, args.batch_size or 4
    else:
        if args.data is None:
            raise InputError("train needs --data DIR (MNIST IDX files) or --task xor")
        layers = _layer_sizes(args.spec) if args.spec else (784, 32, 10)
        spec = LayeredSpec(layers, threshold=args.threshold or DEFAULT_TRAIN_THRESHOLD, horizon=args.timesteps or 25)
        data = find_mnist(args.data, "train")
        if args.train_count:
            data = data.head(args.train_count)
        inj = pixel_injections(data.images, spec, args.input_gain)
        labels = data.labels
        lr, batch = args.lr or 0.2, args.batch_size or 20
    config = TrainConfig(learning_rate=lr, batch_size=batch, epochs=args.epochs,
                         seed=args.seed, input_gain=args.input_gain, dataset=str(args.data or args.task))
    log_fh = open(args.log, "w") if args.log else None
    try:
        def on_epoch(rec):
            print(f"epoch {rec.epoch:3d}  loss {rec.loss:.4f}  acc {rec.accuracy:.3f}")
            if log_fh:
                log_fh.write(rec.to_json() + "\n")
                log_fh.flush()

        result = train(spec, config, inj, labels, on_epoch)
    finally:
        if log_fh:
            log_fh.close()
    net = result.to_graph()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save(out)
    print(f"wrote {out} ({net.neuron_count} neurons, {len(net.pre)} synapses)")
    return 0


def cmd_compile(args) -> int:
    from .compiler import compile_network
    from .memimage import emit_c_array, emit_mem

    net = NetworkGraph.load(args.net)
    qnet, program = compile_network(net)
    out = Path(args.out_dir)
    emit_mem(program, out)
    c_path = out / f"{args.c_prefix}_image.c"
    c_path.write_text(emit_c_array(program, args.c_prefix))
    print(f"{len(program)} tiles over {program.n_rows} rows, scale {program.scale:.4f}, "
          f"threshold_q {program.threshold_q}; wrote {out}")
    return 0


def load_stimulus(path, program, timesteps=None) -> StimulusPlan:
    """Stimulus JSON: either ``{"injections": [[...], ...]}`` or ``{"pixels": [...], "gain": g}``."""
    from .datasets import encode_injection

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None
    if "pixels" in doc:
        T = timesteps or doc.get("timesteps", 25)
        gain = doc.get("gain") or max(1, program.threshold_q // 2)
        return encode_injection(doc["pixels"], T, gain)
    plan = StimulusPlan.from_dict(doc, path=path)
    if timesteps and timesteps != plan.horizon:
        raise InputError(f"timesteps {timesteps} disagrees with the stimulus horizon {plan.horizon}")
    return plan


def cmd_simulate(args) -> int:
    from .cyclesim import PipelineConfig, simulate
    from .memimage import MemoryImage

    image = MemoryImage.read(args.image_dir)
    program = image.to_program()
    stim = load_stimulus(args.stimulus, program, args.timesteps)
    cfg = PipelineConfig(fifo_depth=args.fifo_depth, clock_hz=args.clock_hz)
    res = simulate(program, stim, cfg, image=image, backend=args.backend)
    rep = res.report
    print(f"{rep.total_cycles} cycles over {stim.horizon} timesteps "
          f"({rep.ms_per_inference:.4f} ms at {cfg.clock_hz / 1e6:g} MHz)")
    if program.output_ids:
        counts = res.spikes.spikes[:, list(program.output_ids)].sum(axis=0)
        print("output spike counts:", " ".join(str(int(c)) for c in counts))
        print("predicted class:", int(np.argmax(counts)))
    if args.report:
        rep.save(args.report)
    if args.dump:
        res.dump_output_memory(args.dump)
    return 0


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    report = run_pipeline(args.manifest)
    if report["task"] == "parity":
        print(f"golden check: {report['golden_check']}")
        return 0 if report["golden_check"] == "pass" else 1
    acc = report.get("accuracy")
    if acc:
        print("accuracy  float {float:.3f}  int {int:.3f}  cycle {cycle:.3f}".format(**acc))
    agr = report["agreement"]
    print(f"agreement float/int {agr['float_vs_int_class']:.3f}  int/cycle {agr['int_vs_cycle_class']:.3f}")
    cyc = report["cycles"]
    print(f"{report['tiles']} tiles, {cyc['per_inference']} cycles, {cyc['ms_per_inference']:.4f} ms/inference")
    return 0


def cmd_parity_demo(args) -> int:
    from .pipeline import parity_check

    res = parity_check(args.gap, args.image_dir, args.backend)
    print(res["text"])
    for name, p in res["paths"].items():
        print(f"{name:>6}: {'match' if p['match'] else 'MISMATCH'}")
    return 0 if res["match"] else 1


def cmd_bench(args) -> int:
    from .pipeline import bench

    result = bench(args.manifest, repeats=args.repeats)
    print(json.dumps(result, indent=2))
    if args.out:
        _write_json(args.out, result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snntile", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a layered spiking network with surrogate BPTT")
    t.add_argument("--spec", nargs="+", help="layer sizes, e.g. 784,32,10")
    t.add_argument("--task", choices=["mnist", "xor"], default="mnist")
    t.add_argument("--data", help="directory holding MNIST IDX files")
    t.add_argument("--train-count", type=int, default=1000)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, help="default 0.2 (mnist) or 0.5 (xor)")
    t.add_argument("--batch-size", type=int, help="default 20 (mnist) or 4 (xor)")
    t.add_argument("--timesteps", type=int)
    t.add_argument("--threshold", type=float, help="default 0.5 (mnist) or 1.0 (xor)")
    t.add_argument("--input-gain", type=float, default=0.5)
    t.add_argument("--log", help="JSON-lines file for per-epoch records")
    t.add_argument("--out", required=True, help="network JSON to write")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compile", help="quantize, tile and emit memory images")
    c.add_argument("--net", required=True)
    c.add_argument("--out-dir", required=True)
    c.add_argument("--c-prefix", default="snn")
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", help="run a stimulus through the cycle model")
    s.add_argument("--image-dir", required=True)
    s.add_argument("--stimulus", required=True, help="JSON with 'injections' or 'pixels'")
    s.add_argument("--timesteps", type=int)
    s.add_argument("--fifo-depth", type=int, default=8)
    s.add_argument("--clock-hz", type=float, default=100e6)
    s.add_argument("--backend", choices=["numba", "numpy"])
    s.add_argument("--report")
    s.add_argument("--dump", help="write output spike memory as hex lines")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="execute a run manifest end to end")
    r.add_argument("--manifest", required=True)
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("parity-demo", help="print the parity spike table and check it")
    d.add_argument("--gap", choices=["even", "odd"], required=True)
    d.add_argument("--image-dir")
    d.add_argument("--backend", choices=["numba", "numpy"])
    d.set_defaults(func=cmd_parity_demo)

    b = sub.add_parser("bench", help="time numba and numpy kernels")
    b.add_argument("--manifest", required=True)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SNNError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
