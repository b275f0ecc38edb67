"""Command-line interface: enhance, synth, bench, inspect."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import kvdoc
from .audio import AudioBuffer, read_wav, write_wav
from .config import count_parameters, preset, read_config, write_config
from .engine import StreamingEngine, StreamingEngine48k, measure_rtf
from .errors import ConfigError, DeepVqeError
from .model import build_model
from .scenario import ScenarioParams, synth_scenario
from .weights import load as load_weights
from .weights import random_init, save as save_weights


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepvqe",
        description="Streaming joint echo-cancellation / noise-suppression / dereverberation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enh = sub.add_parser("enhance", help="enhance a WAV file")
    enh.add_argument("--mic", required=True, help="microphone WAV (24 or 48 kHz, mono)")
    enh.add_argument("--farend", default=None, help="far-end reference WAV (optional)")
    enh.add_argument("--weights", required=True, help="weight store path")
    enh.add_argument("--config", required=True, help="model config path")
    enh.add_argument("--out", required=True, help="output WAV path")
    enh.add_argument("--dump-delays", default=None, help="write per-frame delay CSV here")
    enh.add_argument("--compensate-delay", action="store_true",
                     help="trim the 20 ms algorithmic delay from the output")
    enh.add_argument("--out-format", choices=("float32", "pcm16"), default="float32")

    syn = sub.add_parser("synth", help="generate a synthetic echo scenario")
    syn.add_argument("--seed", type=int, required=True)
    syn.add_argument("--out-dir", required=True)
    syn.add_argument("--ser", type=float, default=10.0, help="signal-to-echo ratio in dB")
    syn.add_argument("--snr", type=float, default=25.0, help="signal-to-noise ratio in dB")
    syn.add_argument("--delay", type=int, default=20, help="bulk echo delay in frames")
    syn.add_argument("--t60", type=float, default=0.3, help="reverberation time in seconds")
    syn.add_argument("--duration", type=float, default=3.0, help="scenario length in seconds")
    syn.add_argument("--rate", type=int, choices=(24000, 48000), default=24000)
    syn.add_argument("--near-silent", action="store_true", help="no near-end talker")

    ben = sub.add_parser("bench", help="measure per-frame processing time")
    ben.add_argument("--config", required=True)
    ben.add_argument("--weights", default=None, help="weight store (random if omitted)")
    ben.add_argument("--seconds", type=float, default=10.0)
    ben.add_argument("--out", default=None, help="write the machine-readable report here")

    ins = sub.add_parser("inspect", help="print block shapes and parameter count")
    ins.add_argument("--config", required=True)

    exp = sub.add_parser("export-config", help="write a preset config file")
    exp.add_argument("--variant", choices=("deepvqe", "deepvqe-s"), required=True)
    exp.add_argument("--out", required=True)

    exp2 = sub.add_parser("init-weights", help="write a deterministic random weight store")
    exp2.add_argument("--config", required=True)
    exp2.add_argument("--seed", type=int, default=0)
    exp2.add_argument("--out", required=True)
    return parser


def _load_model(config_path: str, weights_path: str | None, seed: int = 0):
    cfg = read_config(config_path)
    if weights_path is None:
        store = random_init(cfg, seed)
    else:
        store = load_weights(weights_path)
    return cfg, build_model(cfg, store)


def _cmd_enhance(args) -> int:
    cfg, model = _load_model(args.config, args.weights)
    mic = read_wav(args.mic)
    if args.farend is not None:
        far = read_wav(args.farend)
        if far.sample_rate != mic.sample_rate:
            raise ConfigError(
                f"mic is {mic.sample_rate} Hz but far-end is {far.sample_rate} Hz"
            )
        far_x = far.samples
    else:
        far_x = np.zeros(len(mic))

    collect = args.dump_delays is not None
    if mic.sample_rate == 48000:
        engine = StreamingEngine48k(model, collect_delays=collect)
    else:
        engine = StreamingEngine(model, collect_delays=collect)

    hop = engine.hop
    length = max(len(mic), len(far_x))
    total = length + (engine.latency_samples if args.compensate_delay else 0)
    n_packets = -(-total // hop) if total else 0
    mic_x = np.pad(mic.samples, (0, n_packets * hop - len(mic)))
    far_x = np.pad(far_x, (0, n_packets * hop - len(far_x)))

    out = np.zeros(n_packets * hop)
    for i in range(n_packets):
        sl = slice(i * hop, (i + 1) * hop)
        out[sl] = engine.process_frame(mic_x[sl], far_x[sl])
    if args.compensate_delay:
        out = out[engine.latency_samples : engine.latency_samples + length]
    else:
        out = out[:length]
    write_wav(args.out, AudioBuffer(out, mic.sample_rate), fmt=args.out_format)

    if collect:
        with open(args.dump_delays, "w", encoding="utf-8") as fh:
            fh.write("frame,argmax_delay,top_probability\n")
            for i, row in enumerate(engine.delay_rows):
                top = int(np.argmax(row))
                fh.write(f"{i},{top},{row[top]:.6f}\n")
    print(f"wrote {args.out} ({len(out)} samples at {mic.sample_rate} Hz)")
    return 0


def _cmd_synth(args) -> int:
    params = ScenarioParams(
        duration_s=args.duration,
        ser_db=args.ser,
        snr_db=args.snr,
        bulk_delay_frames=args.delay,
        t60_s=args.t60,
        sample_rate=args.rate,
        near_active=not args.near_silent,
    )
    scenario = synth_scenario(args.seed, params)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wav(out_dir / "mic.wav", scenario.mic)
    write_wav(out_dir / "farend.wav", scenario.far_end)
    write_wav(out_dir / "nearend.wav", scenario.near_end)
    with open(out_dir / "labels.txt", "w", encoding="utf-8") as fh:
        fh.write("start_ms,end_ms,label\n")
        for start, end, label in scenario.segments:
            fh.write(f"{start:.1f},{end:.1f},{label}\n")
    kvdoc.write(out_dir / "truth.kv", scenario.truth_doc())
    print(f"wrote scenario to {out_dir} ({len(scenario.segments)} labeled segments)")
    return 0


def _cmd_bench(args) -> int:
    cfg, model = _load_model(args.config, args.weights)
    engine = StreamingEngine(model)
    report = measure_rtf(engine, seconds=args.seconds)
    print(report.table())
    doc = report.to_doc()
    doc["bench.variant"] = cfg.variant
    doc["bench.parameters"] = count_parameters(cfg)
    print()
    print(kvdoc.dumps(doc), end="")
    if args.out:
        kvdoc.write(args.out, doc)
    return 0


def _cmd_inspect(args) -> int:
    cfg, model = _load_model(args.config, None)
    trace = model.trace_shapes()
    print(f"variant            {cfg.variant}")
    print(f"parameters         {count_parameters(cfg):,}")
    print(f"encoder bin ladder {' -> '.join(str(b) for b in cfg.encoder_ladder)}")
    print(f"decoder bin ladder {' -> '.join(str(b) for b in (cfg.encoder_ladder[-1],) + cfg.decoder_targets)}")
    print("block outputs (c, t, f):")
    for name, shape in trace.shapes:
        print(f"  {name:12s} {shape}")
    return 0


def _cmd_export_config(args) -> int:
    write_config(preset(args.variant), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_init_weights(args) -> int:
    cfg = read_config(args.config)
    save_weights(random_init(cfg, args.seed), args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "enhance": _cmd_enhance,
    "synth": _cmd_synth,
    "bench": _cmd_bench,
    "inspect": _cmd_inspect,
    "export-config": _cmd_export_config,
    "init-weights": _cmd_init_weights,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DeepVqeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
