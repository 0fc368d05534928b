"""Command-line interface: ``tasnet {gen-data,train,separate,eval,profile,basis}``.

Exit codes: 0 success, 1 user error (bad flags, missing or malformed
inputs), 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from .analysis import basis_spectra, evaluate, write_basis_csv, write_eval_csv
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import ManifestError, WavFormatError, generate_split, load_dataset, read_manifest, wav_read, wav_write
from .model import ModelConfig, forward_utterance, init_params
from .streaming import LATENCY_COLUMNS, StreamError, profile_latency, separate_stream
from .training import NonFiniteGradientError, TrainConfig, TrainState, run_curriculum

log = logging.getLogger("tasnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -- configuration ------------------------------------------------------------------

MODEL_KEYS = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
DATA_KEYS = {"count": "int", "duration_s": "float", "split": "str", "sample_rate": "int"}


def _coerce(key: str, raw: str, kind):
    kind = str(kind)
    try:
        if "bool" in kind:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "tuple" in kind:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if "None" in kind and raw.lower() == "none":
            return None
        if "float" in kind:
            return float(raw)
        if "int" in kind:
            return int(raw)
        return raw
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    known = {**MODEL_KEYS, **TRAIN_KEYS, **DATA_KEYS}
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value.strip(), known[key])
    return out


def _resolve(args) -> dict:
    cfg = read_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _print_header(command: str, resolved: dict) -> None:
    print(f"# tasnet {__version__} {command}")
    for k in sorted(resolved):
        print(f"# {k} = {resolved[k]}")


def _model_config(cfg: dict) -> ModelConfig:
    kw = {k: v for k, v in cfg.items() if k in MODEL_KEYS}
    try:
        return ModelConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from None


def _train_config(cfg: dict, bidirectional: bool) -> TrainConfig:
    kw = {k: v for k, v in cfg.items() if k in TRAIN_KEYS}
    try:
        return TrainConfig.for_model(bidirectional, **kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from None


def _need_checkpoint(args, parser) -> Path:
    if not args.checkpoint:
        raise UsageError(f"{parser.format_usage()}{parser.prog}: error: --checkpoint is required")
    return Path(args.checkpoint)


# -- commands -----------------------------------------------------------------------


def cmd_gen_data(args, parser) -> int:
    cfg = _resolve(args)
    split = args.split or cfg.get("split", "train")
    count = args.count if args.count is not None else cfg.get("count", 8)
    duration = args.duration if args.duration is not None else cfg.get("duration_s", 0.5)
    if count < 1 or duration <= 0:
        raise UsageError("--count must be >= 1 and --duration positive")
    resolved = {"split": split, "count": count, "duration_s": duration, "seed": cfg["seed"], "out": args.out}
    _print_header("gen-data", resolved)
    manifest = generate_split(args.out, split, count, duration, cfg["seed"], cfg.get("sample_rate", 8000))
    print(f"wrote {count} mixtures, manifest {manifest}")
    return 0


def cmd_train(args, parser) -> int:
    ckpt = _need_checkpoint(args, parser)
    if not args.train or not args.valid or len(args.train) != len(args.valid):
        raise UsageError("give one --valid manifest per --train manifest (curriculum stages in order)")
    cfg = _resolve(args)
    mcfg = _model_config(cfg)
    tcfg = _train_config(cfg, mcfg.bidirectional)
    _print_header("train", {**dataclasses.asdict(mcfg), **dataclasses.asdict(tcfg)})
    stages = [(load_dataset(read_manifest(t)), load_dataset(read_manifest(v))) for t, v in zip(args.train, args.valid)]
    if args.resume and ckpt.exists():
        params, state = load_checkpoint(ckpt, mcfg)
        if state is None:
            raise UsageError(f"{ckpt} holds no optimizer state to resume from")
    else:
        params, state = init_params(mcfg, cfg["seed"]), None

    def save(p, st, row):
        save_checkpoint(ckpt, p, st)

    log_path = Path(args.log) if args.log else ckpt.with_suffix(".log.csv")
    params, history = run_curriculum(params, stages, tcfg, state, log_path=log_path, on_epoch=save)
    if not history:
        save_checkpoint(ckpt, params, state)
    if not args.no_plot and history:
        from .plotting import plot_training_curve

        plot_training_curve(history, log_path.with_suffix(".png"))
    last = history[-1] if history else {}
    print(f"trained {len(history)} epochs; final valid loss {last.get('valid_loss', float('nan')):.4f}; log {log_path}")
    return 0


def cmd_separate(args, parser) -> int:
    ckpt = _need_checkpoint(args, parser)
    cfg = _resolve(args)
    params, _ = load_checkpoint(ckpt)
    inp = Path(args.input)
    if not inp.exists():
        raise UsageError(f"input not found: {inp}")
    x, rate = wav_read(inp, expected_rate=None)
    _print_header("separate", {**params.config.to_dict(), "input": inp, "stream": args.stream, "seed": cfg["seed"]})
    out_dir = Path(args.out_dir) if args.out_dir else inp.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = inp.name[:-4] if inp.name.lower().endswith(".wav") else inp.name
    if args.stream:
        est, report = separate_stream(params, x, [args.chunk or params.config.L], rate)
        lat_path = out_dir / f"{stem}.latency.csv"
        write_latency_csv(lat_path, report)
        print(f"latency: T_i={report.T_i:.3f} ms T_p={report.T_p:.4f} ms T_tot={report.T_tot:.4f} ms -> {lat_path}")
    else:
        est = forward_utterance(x, params)
    for i, s in enumerate(est, 1):
        path = out_dir / f"{stem}.s{i}.wav"
        wav_write(path, s, rate)
        print(f"wrote {path}")
    return 0


def cmd_eval(args, parser) -> int:
    ckpt = _need_checkpoint(args, parser)
    if not args.manifest:
        raise UsageError(f"{parser.format_usage()}{parser.prog}: error: --manifest is required")
    cfg = _resolve(args)
    params, _ = load_checkpoint(ckpt)
    manifest = read_manifest(args.manifest)
    missing = manifest.missing_files()
    if missing:
        raise ManifestError("missing files:\n  " + "\n  ".join(map(str, missing)))
    _print_header("eval", {**params.config.to_dict(), "manifest": args.manifest, "seed": cfg["seed"]})
    report = evaluate(params, manifest, model_id=str(ckpt), dataset_id=str(args.manifest))
    out = Path(args.out) if args.out else Path(args.manifest).with_suffix(".eval.csv")
    write_eval_csv(out, report)
    print(f"utterances {len(report.rows)}  mean SI-SNR {report.mean_si_snr:.3f} dB  "
          f"mean SI-SNRi {report.mean_si_snri:.3f} dB  median SI-SNRi {report.median_si_snri:.3f} dB")
    print(f"wrote {out}")
    return 0


def write_latency_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LATENCY_COLUMNS)
        row = report.as_row()
        w.writerow([row[c] for c in LATENCY_COLUMNS])


def cmd_profile(args, parser) -> int:
    ckpt = _need_checkpoint(args, parser)
    cfg = _resolve(args)
    params, _ = load_checkpoint(ckpt)
    if params.config.bidirectional:
        raise StreamError("profiling needs a causal (unidirectional) model")
    _print_header("profile", {**params.config.to_dict(), "duration_s": args.duration, "chunk": args.chunk, "seed": cfg["seed"]})
    report = profile_latency(params, args.duration, args.chunk, seed=cfg["seed"])
    out = Path(args.out) if args.out else Path("latency.csv")
    write_latency_csv(out, report)
    if not args.no_plot:
        from .plotting import plot_latency

        plot_latency(report.timings_ms, report.T_i, out.with_suffix(".png"))
    print(f"segments {report.segments_processed}  T_i {report.T_i:.3f} ms  T_p {report.T_p:.4f} ms  "
          f"T_p95 {report.T_p_p95:.4f} ms  T_tot {report.T_tot:.4f} ms")
    return 0


def cmd_basis(args, parser) -> int:
    ckpt = _need_checkpoint(args, parser)
    cfg = _resolve(args)
    params, _ = load_checkpoint(ckpt)
    L = params.config.L
    _print_header("basis", {**params.config.to_dict(), "seed": cfg["seed"]})
    table = basis_spectra(params["dec_B"])
    out = Path(args.out) if args.out else Path("basis.csv")
    write_basis_csv(out, table, L)
    if not args.no_plot:
        from .plotting import plot_basis_spectra

        plot_basis_spectra(table, L, out.with_suffix(".png"))
    below = table.fraction_below(1000.0, L)
    log.info("%.1f%% of basis centers below 1 kHz", 100 * below)
    print(f"basis signals {len(table.order)}; {below:.1%} with center frequency below 1 kHz; wrote {out}")
    return 0


# -- dispatch ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--checkpoint", help="model checkpoint path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="tasnet", description="Time-domain audio separation network")
    parser.add_argument("--version", action="version", version=f"tasnet {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="synthesize a two-source mixture split")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.add_argument("--count", type=int)
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train with the curriculum schedule")
    p.add_argument("--train", action="append", help="training manifest (repeat per curriculum stage)")
    p.add_argument("--valid", action="append", help="validation manifest (repeat per stage)")
    p.add_argument("--log", help="CSV training log (default: <checkpoint>.log.csv)")
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint if it exists")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", parents=[common], help="separate a WAV file")
    p.add_argument("input")
    p.add_argument("--stream", action="store_true", help="segment-by-segment causal processing")
    p.add_argument("--chunk", type=int, help="stream chunk size in samples (default L)")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("eval", parents=[common], help="SI-SNR / SI-SNRi over a manifest")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", parents=[common], help="streaming latency report")
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--chunk", type=int)
    p.add_argument("--out")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("basis", parents=[common], help="decoder basis frequency responses")
    p.add_argument("--out")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_basis)
    return parser


USER_ERRORS = (UsageError, CheckpointError, ManifestError, WavFormatError, StreamError, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().rstrip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        return args.func(args, sub)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except USER_ERRORS as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except NonFiniteGradientError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
