"""Command-line front end.

Commands: synthdata, train, enhance, evaluate, gradcheck, embed. Options come
from flags, then from the ``--config`` file, then from defaults. The config
file holds ``key = value`` lines; a key is either a model setting (see
``ModelConfig``) or one of the current command's options.

Exit codes: 0 success, 1 contract or validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as M
from .checks import run_suite
from .config import ModelConfig, parse_kv
from .embeddings import provider_load, provider_save, provider_synthetic
from .errors import CffmaError, CheckpointError, ConfigError, EmbeddingFormatError, WavFormatError
from .numerics.optim import AdamState
from .signal import mix_at_snr, read_wav, si_snr, write_wav
from .synth import NOISE_TYPES, clean_signal, noise_signal

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2

LOG_FIELDS = ("step", "loss", "lr", "grad_norm", "wall_ms")
EVAL_FIELDS = ("clean", "noisy", "si_snr_noisy", "si_snr_enhanced", "delta", "rtf")

PRESETS = {
    "full": lambda: ModelConfig(),
    "tiny": lambda: ModelConfig.tiny(),
    "desk": lambda: ModelConfig.desk(),
}

log = logging.getLogger("cffma")


class IOFailure(Exception):
    """A file could not be read or written; maps to exit code 2."""


# ---------------------------------------------------------------------------
# option resolution

# per command: option name -> (type, default); flags default to None so that
# "not given" can fall through to the config file
OPTIONS = {
    "synthdata": {"n_utts": (int, 4), "duration_s": (float, 2.56), "snr_list": (str, "0,5,10,15")},
    "train": {"preset": (str, "desk"), "log": (str, ""), "resume": (str, "")},
    "enhance": {"embeddings": (str, ""), "ref": (str, "")},
    "evaluate": {"csv": (str, ""), "threads": (int, 0)},
    "gradcheck": {"preset": (str, "tiny"), "seeds": (int, 1), "inject_fault": (str, "")},
    "embed": {"preset": (str, "desk")},
}


def _read_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_kv(text)


def resolve(args: argparse.Namespace) -> tuple[dict[str, object], dict[str, str]]:
    """Command options and leftover model keys, after flag > file > default."""
    spec = OPTIONS[args.command]
    file_values = _read_config_file(args.config)
    opts: dict[str, object] = {}
    for name, (kind, default) in spec.items():
        flag = getattr(args, name, None)
        if flag is not None:
            opts[name] = flag
        elif name in file_values:
            try:
                opts[name] = kind(file_values[name])
            except ValueError:
                raise ConfigError(f"{name}: cannot parse {file_values[name]!r}") from None
        else:
            opts[name] = default
    model_keys = {k: v for k, v in file_values.items() if k not in spec}
    return opts, model_keys


def model_config(preset: str, model_keys: dict[str, str], seed: int | None) -> ModelConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    config = ModelConfig.from_mapping(model_keys, PRESETS[preset]())
    if seed is not None:
        config = config.replace(seed=seed)
    return config


def _need_file(path: str | os.PathLike, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise IOFailure(f"{what} not found: {p}")
    return p


def _need_writable_dir(path: str | os.PathLike, what: str) -> Path:
    p = Path(path)
    if not p.is_dir() or not os.access(p, os.W_OK):
        raise IOFailure(f"{what} is not a writable directory: {p}")
    return p


# ---------------------------------------------------------------------------
# manifests

@dataclass
class ManifestRow:
    clean: Path
    noisy: Path
    snr_db: float
    embeddings: Path | None = None


def read_manifest(path: str | os.PathLike) -> list[ManifestRow]:
    """Tab-separated ``clean, noisy, snr_db[, embeddings]``; relative paths resolve against the manifest."""
    path = _need_file(path, "manifest")
    base = path.parent
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) not in (3, 4):
            raise ConfigError(f"{path}:{lineno}: expected 3 or 4 tab-separated columns, got {len(cols)}")
        try:
            snr = float(cols[2])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad SNR {cols[2]!r}") from None
        emb = base / cols[3] if len(cols) == 4 and cols[3] else None
        rows.append(ManifestRow(base / cols[0], base / cols[1], snr, emb))
    return rows


def write_manifest(path: Path, rows: list[tuple[str, str, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for clean, noisy, snr in rows:
            fh.write(f"{clean}\t{noisy}\t{snr:g}\n")


# ---------------------------------------------------------------------------
# commands

def cmd_synthdata(args, opts, model_keys) -> int:
    if model_keys:
        raise ConfigError(f"unknown config keys for synthdata: {', '.join(sorted(model_keys))}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _need_writable_dir(out, "output directory")
    try:
        snrs = [float(s) for s in str(opts["snr_list"]).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad SNR list {opts['snr_list']!r}") from None
    n_utts, duration = int(opts["n_utts"]), float(opts["duration_s"])
    if n_utts < 1 or duration <= 0 or not snrs:
        raise ConfigError("need n_utts >= 1, duration_s > 0 and at least one SNR")

    seed = 0 if args.seed is None else args.seed
    n = int(round(duration * 16000))
    rows = []
    for i in range(n_utts):
        clean = clean_signal(n, seed=seed * 100003 + i)
        clean_name = f"clean_{i:03d}.wav"
        write_wav(out / clean_name, clean)
        for j, snr in enumerate(snrs):
            k = i * len(snrs) + j
            kind = NOISE_TYPES[k % len(NOISE_TYPES)]
            noise = noise_signal(n, kind, seed=seed * 100003 + 50000 + k)
            mix = mix_at_snr(clean, noise, snr, seed=seed + k)
            noisy_name = f"noisy_{i:03d}_{j:02d}_{kind}.wav"
            write_wav(out / noisy_name, mix.noisy)
            ref_name = clean_name
            if mix.scale != 1.0:
                # the mixture was peak-limited, so its clean reference is scaled too
                ref_name = f"clean_{i:03d}_{j:02d}.wav"
                write_wav(out / ref_name, mix.clean)
            rows.append((ref_name, noisy_name, snr))
            log.info("%s  %s  %g dB", ref_name, noisy_name, snr)
    write_manifest(out / "manifest.tsv", rows)
    print(f"wrote {len(rows)} pairs to {out / 'manifest.tsv'}")
    return EXIT_OK


def _load_dataset(rows: list[ManifestRow]):
    data = []
    for row in rows:
        clean, noisy = read_wav(row.clean), read_wav(row.noisy)
        emb = provider_load(row.embeddings) if row.embeddings else None
        data.append(M.Utterance(noisy, clean, emb))
    return data


def _write_log(path: Path, records: list[dict], append: bool = False) -> None:
    fresh = not (append and path.exists())
    with open(path, "a" if not fresh else "w", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(LOG_FIELDS)
        for r in records:
            w.writerow([r["step"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])


def read_log(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"step": int(r["step"]), **{k: float(r[k]) for k in LOG_FIELDS[1:]}}
                for r in csv.DictReader(fh)]


def cmd_train(args, opts, model_keys) -> int:
    rows = read_manifest(args.manifest)
    if not rows:
        raise ConfigError(f"manifest {args.manifest} is empty")
    out = Path(args.out_checkpoint)
    _need_writable_dir(out.parent if str(out.parent) else Path("."), "checkpoint directory")
    log_path = Path(opts["log"]) if opts["log"] else out.with_suffix(".csv")
    for row in rows:
        _need_file(row.clean, "clean wav")
        _need_file(row.noisy, "noisy wav")

    if opts["resume"]:
        ckpt = M.load_checkpoint(_need_file(opts["resume"], "checkpoint"))
        net, state, start = ckpt.net, ckpt.opt_state, ckpt.step
        if model_keys or args.seed is not None:
            overrides = dict(model_keys)
            if args.seed is not None:
                overrides["seed"] = str(args.seed)
            net.config = ModelConfig.from_mapping(overrides, ckpt.config)
    else:
        config = model_config(str(opts["preset"]), model_keys, args.seed)
        net, state, start = M.build(config), None, 0
    config = net.config
    dataset = _load_dataset(rows)
    print(f"training {net.num_parameters()} parameters on {len(dataset)} utterances, "
          f"steps {start}..{config.steps}")

    records: list[dict] = []

    def on_step(r):
        records.append(r)
        log.info("step %d loss %.5f lr %.2e |g| %.3e", r["step"], r["loss"], r["lr"], r["grad_norm"])

    def on_epoch(step, st):
        M.save_checkpoint(out, net, st, step)

    state = state or AdamState(lr=config.lr)
    M.train(net, dataset, state, start, max(0, config.steps - start), on_step, on_epoch)
    M.save_checkpoint(out, net, state, max(start, config.steps))
    _write_log(log_path, records, append=bool(opts["resume"]))
    if records:
        print(f"loss {records[0]['loss']:.5f} -> {records[-1]['loss']:.5f}; log {log_path}")
    print(f"checkpoint {out}")
    return EXIT_OK


def cmd_enhance(args, opts, model_keys) -> int:
    if model_keys:
        raise ConfigError(f"unknown config keys for enhance: {', '.join(sorted(model_keys))}")
    ckpt_path = _need_file(args.checkpoint, "checkpoint")
    in_path = _need_file(args.in_wav, "input wav")
    emb_path = _need_file(opts["embeddings"], "embedding file") if opts["embeddings"] else None
    ref_path = _need_file(opts["ref"], "reference wav") if opts["ref"] else None
    out = Path(args.out_wav)
    _need_writable_dir(out.parent, "output directory")

    net = M.load_checkpoint(ckpt_path).net
    noisy = read_wav(in_path)
    emb = provider_load(emb_path) if emb_path else None
    enhanced = M.enhance(net, noisy, emb)
    write_wav(out, enhanced)
    if ref_path:
        ref = read_wav(ref_path)
        print(f"si_snr_db={si_snr(enhanced, ref):.4f}")
        print(f"si_snr_noisy_db={si_snr(noisy, ref):.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def _evaluate_one(net, row: ManifestRow) -> dict:
    clean, noisy = read_wav(row.clean), read_wav(row.noisy)
    emb = provider_load(row.embeddings) if row.embeddings else None
    t0 = time.perf_counter()
    enhanced = M.enhance(net, noisy, emb)
    elapsed = time.perf_counter() - t0
    before, after = si_snr(noisy, clean), si_snr(enhanced, clean)
    return {
        "clean": str(row.clean), "noisy": str(row.noisy),
        "si_snr_noisy": before, "si_snr_enhanced": after, "delta": after - before,
        "rtf": elapsed / noisy.duration,
    }


def format_table(results: list[dict]) -> str:
    head = ("noisy", "si_snr_noisy", "si_snr_enh", "delta", "rtf")
    body = [(Path(r["noisy"]).name, f"{r['si_snr_noisy']:.3f}", f"{r['si_snr_enhanced']:.3f}",
             f"{r['delta']:+.3f}", f"{r['rtf']:.4f}") for r in results]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_evaluate(args, opts, model_keys) -> int:
    if model_keys:
        raise ConfigError(f"unknown config keys for evaluate: {', '.join(sorted(model_keys))}")
    ckpt_path = _need_file(args.checkpoint, "checkpoint")
    rows = read_manifest(args.manifest)
    if not rows:
        raise ConfigError(f"manifest {args.manifest} is empty")
    csv_path = Path(opts["csv"]) if opts["csv"] else Path(args.manifest).with_suffix(".eval.csv")
    _need_writable_dir(csv_path.parent, "CSV directory")

    missing = [p for r in rows for p in (r.clean, r.noisy, r.embeddings) if p is not None and not p.is_file()]
    present = [r for r in rows if not any(p is not None and not p.is_file()
                                          for p in (r.clean, r.noisy, r.embeddings))]
    for p in missing:
        print(f"missing: {p}", file=sys.stderr)

    net = M.load_checkpoint(ckpt_path).net
    threads = int(opts["threads"]) or int(os.environ.get("CFFMA_THREADS", "1") or 1)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda r: _evaluate_one(net, r), present))

    if results:
        print(format_table(results))
        mean = {k: float(np.mean([r[k] for r in results]))
                for k in ("si_snr_noisy", "si_snr_enhanced", "delta", "rtf")}
        print(f"mean si_snr_noisy={mean['si_snr_noisy']:.3f} si_snr_enhanced={mean['si_snr_enhanced']:.3f} "
              f"delta={mean['delta']:+.3f}")
        print(f"rtf_mean={mean['rtf']:.4f}")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_FIELDS)
        for r in results:
            w.writerow([r["clean"], r["noisy"]] + [repr(float(r[k])) for k in EVAL_FIELDS[2:]])
    print(f"csv {csv_path} ({len(results)} of {len(rows)} files)")
    if missing:
        print(f"error: {len(missing)} missing file(s)", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_gradcheck(args, opts, model_keys) -> int:
    config = model_config(str(opts["preset"]), model_keys, None)
    faults = tuple(f for f in str(opts["inject_fault"]).split(",") if f)
    seed0 = 0 if args.seed is None else args.seed
    worst: dict[str, tuple[float, float]] = {}
    for seed in range(seed0, seed0 + int(opts["seeds"])):
        for res in run_suite(config, seed, faults):
            prev = worst.get(res.name, (0.0, res.threshold))[0]
            worst[res.name] = (max(prev, res.error), res.threshold)
    width = max(len(k) for k in worst)
    failed = []
    for name, (err, thr) in worst.items():
        ok = err < thr
        if not ok:
            failed.append(name)
        print(f"{name.ljust(width)}  {err:.3e}  < {thr:.0e}  {'ok' if ok else 'FAIL'}")
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CONTRACT
    print(f"all {len(worst)} checks passed")
    return EXIT_OK


def cmd_embed(args, opts, model_keys) -> int:
    """Write an SSLE file from the synthetic provider, sized by the model config."""
    in_path = _need_file(args.in_wav, "input wav")
    out = Path(args.out_file)
    _need_writable_dir(out.parent, "output directory")
    config = model_config(str(opts["preset"]), model_keys, None)
    seed = config.ssl_seed if args.seed is None else args.seed
    stack = provider_synthetic(read_wav(in_path), config.ssl_layers, config.ssl_dim, seed)
    provider_save(out, stack)
    print(f"wrote {out}: N={stack.n_layers} T={stack.n_frames} D={stack.dim}")
    return EXIT_OK


COMMANDS = {
    "synthdata": cmd_synthdata,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "embed": cmd_embed,
}


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS lets the global flags appear before or after the command name
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="cffma", parents=[common], description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthdata", parents=[common], help="generate a synthetic noisy/clean dataset")
    p.add_argument("out_dir")
    p.add_argument("--n-utts", dest="n_utts", type=int)
    p.add_argument("--duration", dest="duration_s", type=float, help="seconds per utterance")
    p.add_argument("--snr", dest="snr_list", help="comma-separated SNRs in dB")

    p = sub.add_parser("train", parents=[common], help="train from a manifest")
    p.add_argument("manifest")
    p.add_argument("out_checkpoint")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--log", help="CSV log path (default: checkpoint path with .csv)")
    p.add_argument("--resume", help="continue from this checkpoint")

    p = sub.add_parser("enhance", parents=[common], help="enhance one WAV file")
    p.add_argument("checkpoint")
    p.add_argument("in_wav")
    p.add_argument("out_wav")
    p.add_argument("--embeddings", help="SSLE file for the input (default: synthetic provider)")
    p.add_argument("--ref", help="clean reference; prints si_snr_db=")

    p = sub.add_parser("evaluate", parents=[common], help="SI-SNR and RTF over a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--csv", help="per-file CSV (default: manifest path with .eval.csv)")
    p.add_argument("--threads", type=int, help="worker threads (default: $CFFMA_THREADS or 1)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference audit of every op")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seeds", type=int, help="number of seeds to sweep")
    p.add_argument("--inject-fault", dest="inject_fault", help="corrupt the backward of these ops (comma list)")

    p = sub.add_parser("embed", parents=[common], help="write a synthetic SSLE embedding file")
    p.add_argument("in_wav")
    p.add_argument("out_file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        opts, model_keys = resolve(args)
        return COMMANDS[args.command](args, opts, model_keys)
    except (IOFailure, OSError, WavFormatError, EmbeddingFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CffmaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
