"""Command-line pipelines: gen, train, denoise, eval, hwsim.

Exit codes: 0 success, 1 runtime/data error, 2 usage error.  Every run
that writes files also writes ``<output>.manifest.json`` with the resolved
configuration and SHA-256 hashes of inputs and outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import baseline, hwsim, mlpf, synth, trainer
from .denoiser import DenoiseConfig, denoise_stream, logits_for_features
from .evaluation import EvaluationError, roc_curve
from .events import EventError, SensorGeometry, parse_stream, write_stream
from .tpi import AgeWindow

log = logging.getLogger("mlpf_hw")


class CliError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(subcommand, config: dict, inputs, outputs, seed=None):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": {os.path.basename(p): sha256(p) for p in inputs},
        "outputs": {os.path.basename(p): sha256(p) for p in outputs},
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _geometry(args) -> SensorGeometry:
    return SensorGeometry(args.width, args.height)


def cmd_gen(args):
    geometry = _geometry(args)
    events = synth.make_dataset(args.preset, args.noise_hz, args.duration, args.seed, geometry)
    write_stream(events, args.out, with_label=True)
    n_sig = int(events.label.sum())
    print(f"events={len(events)} signal={n_sig} noise={len(events) - n_sig}")
    write_manifest("gen", {"preset": args.preset, "noise_hz": args.noise_hz,
                           "duration": args.duration, "width": geometry.width,
                           "height": geometry.height}, [], [args.out], args.seed)


def cmd_train(args):
    geometry = _geometry(args)
    events = parse_stream(args.data, geometry)
    if not events.labeled:
        raise CliError("training data needs a label column")
    samples = trainer.build_dataset(events, AgeWindow(args.tau_ms), geometry)
    cfg = trainer.TrainConfig(bits=args.bits, lr=args.lr, epochs=args.epochs,
                              batch_size=args.batch_size, steps_per_epoch=args.steps_per_epoch,
                              l1=args.l1, seed=args.seed)
    result = trainer.train(samples, cfg)
    mlpf.save_weights(result.weights, args.out)
    outputs = [args.out]
    if args.history:
        with open(args.history, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(result.history_csv())
        outputs.append(args.history)

    # score diversity and accuracy on (up to) the first 10k events
    sub = samples.subset(slice(0, min(len(samples), 10_000)))
    codes = logits_for_features(result.weights, sub.ages, sub.polarities)
    lines = [f"bits={args.bits}", f"params={result.weights.n_params}",
             f"sparsity={mlpf.sparsity(result.weights):.4f}",
             f"distinct_logits={mlpf.n_distinct(codes)}"]
    if 0 < sub.labels.sum() < len(sub):
        lines.append(f"auc={roc_curve(codes, sub.labels).auc:.6f}")
    print("\n".join(lines))
    write_manifest("train", dict(vars(cfg), tau_ms=args.tau_ms),
                   [args.data], outputs, args.seed)


def cmd_denoise(args):
    geometry = _geometry(args)
    events = parse_stream(args.input, geometry)
    inputs = [args.input]
    if args.filter == "mlpf":
        if not args.weights:
            raise CliError("--weights is required for the mlpf filter")
        weights = mlpf.load_weights(args.weights)
        inputs.append(args.weights)
        cfg = DenoiseConfig(weights, mlpf.Threshold(args.threshold), AgeWindow(args.tau_ms),
                            geometry, emit_scores=not args.no_scores)
        decisions = denoise_stream(events, cfg)
        config = {"filter": "mlpf", "tau_ms": args.tau_ms, "threshold": args.threshold}
    else:
        cfg = baseline.BafConfig(args.baf_tau_us, args.baf_radius, geometry)
        decisions = baseline.baf_denoise(events, cfg)
        if args.no_scores:
            decisions.scores = None
        config = {"filter": "baf", "tau_us": args.baf_tau_us, "radius": args.baf_radius}
    decisions.write(args.out)
    print(f"events={len(decisions)} kept={int(decisions.signal.sum())}")
    write_manifest("denoise", config, inputs, [args.out])


def read_decisions(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CliError(f"{path}: empty decision file")
    header = lines[0].strip().split(",")
    for col in ("logit", "label"):
        if col not in header:
            raise CliError(f"{path}: decision file has no {col!r} column")
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    if not rows:
        raise CliError(f"{path}: no decisions")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError:
        raise CliError(f"{path}: malformed decision rows") from None
    return data[:, header.index("logit")], data[:, header.index("label")].astype(np.int64)


def cmd_eval(args):
    scores, labels = read_decisions(args.decisions)
    if np.all(scores == np.round(scores)) and np.all(np.isfinite(scores)):
        scores = scores.astype(np.int64)
    curve = roc_curve(scores, labels)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(curve.to_csv())
    print(f"auc={curve.auc:.6f}")
    write_manifest("eval", {}, [args.decisions], [args.out])


def cmd_hwsim(args):
    profile = hwsim.get_profile(args.platform)
    t_us = None
    inputs = []
    if args.events:
        t_us = parse_stream(args.events, _geometry(args)).t_us
        inputs.append(args.events)
    host = None
    if args.raw_rate is not None or args.denoised_rate is not None:
        raw = args.raw_rate if args.raw_rate is not None else args.rate
        den = args.denoised_rate if args.denoised_rate is not None else raw
        host = hwsim.host_load(raw, den, args.bytes_per_event, args.buffer_events)
    stats = hwsim.pipeline_stats(profile, args.rate, args.policy, t_us, host)
    text = stats.report()
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(stats.to_csv() if args.out.endswith(".csv") else text)
        write_manifest("hwsim", {"platform": args.platform, "rate": args.rate,
                                 "policy": args.policy, "bytes_per_event": args.bytes_per_event,
                                 "buffer_events": args.buffer_events}, inputs, [args.out])


def _bits(text):
    v = int(text)
    if not 2 <= v <= 8:
        raise argparse.ArgumentTypeError("bit width must be between 2 and 8")
    return v


def _tau(text):
    v = int(text)
    try:
        AgeWindow(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return v


def _nonneg(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlpf-hw", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def geometry_flags(sp):
        sp.add_argument("--width", type=int, default=346)
        sp.add_argument("--height", type=int, default=260)

    g = sub.add_parser("gen", help="synthesize a labeled event CSV")
    g.add_argument("--preset", choices=synth.PRESETS, default="dense")
    g.add_argument("--noise-hz", type=_nonneg, default=5.0, help="shot noise rate per pixel")
    g.add_argument("--duration", type=_positive, default=2.0, help="seconds")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    geometry_flags(g)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="quantization-aware training")
    t.add_argument("--data", required=True, help="labeled event CSV")
    t.add_argument("--bits", type=_bits, default=4)
    defaults = trainer.TrainConfig()
    t.add_argument("--epochs", type=int, default=defaults.epochs)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--tau-ms", type=_tau, default=64)
    t.add_argument("--lr", type=_positive, default=defaults.lr)
    t.add_argument("--batch-size", type=int, default=defaults.batch_size)
    t.add_argument("--steps-per-epoch", type=int, default=defaults.steps_per_epoch)
    t.add_argument("--l1", type=_nonneg, default=defaults.l1)
    t.add_argument("--out", required=True, help="weight file")
    t.add_argument("--history", help="per-epoch loss/AUC CSV")
    geometry_flags(t)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("denoise", help="classify every event of a stream")
    d.add_argument("--filter", choices=("mlpf", "baf"), default="mlpf")
    d.add_argument("--input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--weights")
    d.add_argument("--tau-ms", type=_tau, default=64)
    d.add_argument("--threshold", type=int, default=0, help="logit code threshold (Q6.9)")
    d.add_argument("--baf-tau-us", type=int, default=1000)
    d.add_argument("--baf-radius", type=int, default=1)
    d.add_argument("--no-scores", action="store_true")
    geometry_flags(d)
    d.set_defaults(func=cmd_denoise)

    e = sub.add_parser("eval", help="ROC curve and AUC of scored decisions")
    e.add_argument("--decisions", required=True)
    e.add_argument("--out", required=True, help="ROC CSV")
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("hwsim", help="latency / throughput / power report")
    h.add_argument("--platform", choices=sorted(hwsim.PROFILES), default="asic_65nm")
    h.add_argument("--rate", type=_nonneg, default=1e6, help="event rate, Hz")
    h.add_argument("--policy", choices=(hwsim.BYPASS, hwsim.BLOCK), default=hwsim.BYPASS)
    h.add_argument("--events", help="event CSV to run through the occupancy model")
    h.add_argument("--raw-rate", type=_positive, help="host load: raw event rate")
    h.add_argument("--denoised-rate", type=_positive, help="host load: denoised event rate")
    h.add_argument("--bytes-per-event", type=int, default=4)
    h.add_argument("--buffer-events", type=int, default=10_000)
    h.add_argument("--out", help="report file (.csv for CSV, else key=value)")
    geometry_flags(h)
    h.set_defaults(func=cmd_hwsim)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, EventError, EvaluationError, mlpf.WeightFileError,
            trainer.TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
