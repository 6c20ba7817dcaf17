"""Command-line entry point: ``smgaa {synth,degrade,featurize,train,eval,inspect}``.

Exit codes: 0 success, 1 some items failed (the rest were written), 2 bad
configuration or arguments, 3 any other error.  ``SMGAA_LOG`` selects the log
level (error, info or debug; default info).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus
from .corpus import ManifestRow, read_manifest, resolve, write_manifest
from .errors import ConfigError
from .experiment import ExperimentConfig
from .features import CONDITIONS, DURATIONS, FEATURE_KINDS, FRAMES_PER_DURATION, featurize, load_clip, write_wav
from .metrics import ScoreRow, build_report, write_scores
from .model import SMGAANet, count_flops, count_params, load_model, save_model
from .serialize import load_tensor, save_tensor
from .synth import SynthConfig, generate
from .training import evaluate_scores, fit

log = logging.getLogger("smgaa")

EXIT_OK, EXIT_ITEMS, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _duration(text: str):
    if text == "all":
        return DURATIONS
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"duration must be one of {DURATIONS} or 'all'") from None
    if value not in DURATIONS:
        raise argparse.ArgumentTypeError(f"duration must be one of {DURATIONS} or 'all'")
    return (value,)


def _condition(text: str):
    if text.lower() == "all":
        return CONDITIONS
    cond = text.upper()
    if cond not in CONDITIONS:
        raise argparse.ArgumentTypeError("condition must be c0..c5 or 'all'")
    return (cond,)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment INI file")
    common.add_argument("--seed", type=int, help="overrides every seed in the config")
    common.add_argument("--workers", type=int, help="parallel worker processes for per-file work")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--feature", choices=FEATURE_KINDS)
    common.add_argument("--duration", type=_duration, help="0.5, 1.0, 1.5, 2.0 or all")
    common.add_argument("--condition", type=_condition, help="c0..c5 or all")

    p = argparse.ArgumentParser(prog="smgaa", description="Short-utterance spoof detection toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="generate the synthetic WAV corpus")
    s.add_argument("--n-per-class", type=int, default=50)
    s = sub.add_parser("degrade", parents=[common], help="apply codec and packet-loss conditions")
    s.add_argument("manifest", type=Path)
    s = sub.add_parser("featurize", parents=[common], help="write one SMGT feature file per clip")
    s.add_argument("manifest", type=Path)
    s = sub.add_parser("train", parents=[common], help="train one model per duration")
    s.add_argument("--manifest", type=Path, help="feature manifest (default: paths.train_manifest)")
    s = sub.add_parser("eval", parents=[common], help="score a feature manifest and build the EER report")
    s.add_argument("--checkpoint", type=Path, nargs="+", required=True, help="checkpoint files or directories")
    s.add_argument("--manifest", type=Path, help="feature manifest (default: paths.eval_manifest)")
    sub.add_parser("inspect", parents=[common], help="print parameter and FLOP counts per duration")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    run = cfg.run
    if args.seed is not None:
        run = replace(run, seed=args.seed)
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed), degrade=replace(cfg.degrade, seed=args.seed))
    if args.workers is not None:
        run = replace(run, workers=args.workers)
    if args.feature is not None:
        run = replace(run, feature=args.feature)
    if args.duration is not None:
        run = replace(run, durations=args.duration)
    if args.condition is not None:
        run = replace(run, conditions=args.condition)
    paths = cfg.paths if args.out is None else replace(cfg.paths, out_dir=str(args.out))
    return replace(cfg, run=run, paths=paths)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.ini").write_text(cfg.to_text())
    return out


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ---------------------------------------------------------------- commands
def cmd_synth(cfg: ExperimentConfig, n_per_class: int) -> int:
    out = _out_dir(cfg)
    (out / "wav").mkdir(exist_ok=True)
    clips = generate(SynthConfig(n_per_class=n_per_class, seed=cfg.run.seed), cfg.run.durations)
    rows = []
    for clip in clips:
        rel = f"wav/{clip.clip_id}.wav"
        write_wav(out / rel, clip.samples)
        rows.append(ManifestRow(clip.clip_id, rel, clip.duration_s, clip.label, "C0"))
    write_manifest(out / "manifest.csv", rows)
    log.info("synth: wrote %d clips to %s", len(rows), out)
    return EXIT_OK


def _degrade_one(job):
    src, row, out, conditions, dcfg = job
    try:
        clip = load_clip(src, row.duration, row.label, row.condition, clip_id=row.clip_id)
        made = []
        for cond in conditions:
            new = corpus.with_condition(row, cond, f"wav/{row.clip_id}_{cond}.wav")
            write_wav(out / new.path, corpus.degrade_clip(clip, cond, dcfg).samples)
            made.append(new)
        return made, None
    except Exception as exc:  # reported per file, the run carries on
        return [], f"{row.clip_id}: {exc}"


def cmd_degrade(cfg: ExperimentConfig, manifest: Path) -> int:
    out = _out_dir(cfg)
    (out / "wav").mkdir(exist_ok=True)
    rows = corpus.filter_rows(read_manifest(manifest), cfg.run.durations, ("C0",))
    jobs = [(resolve(manifest, r), r, out, cfg.run.conditions, cfg.degrade) for r in rows]
    made, failures = [], []
    for rows_out, err in _map(_degrade_one, jobs, cfg.run.workers):
        made.extend(rows_out)
        if err:
            failures.append(err)
    write_manifest(out / "manifest.csv", made)
    return _summary("degrade", len(made), failures)


def _featurize_one(job):
    src, row, dst, kind = job
    try:
        fmap = featurize(load_clip(src, row.duration, row.label, row.condition, clip_id=row.clip_id), kind)
        if fmap.data.shape[2:] != (60, FRAMES_PER_DURATION[row.duration]):
            raise ConfigError(f"unexpected feature shape {fmap.data.shape}")
        save_tensor(dst, fmap.data[0])
        return None
    except Exception as exc:
        return f"{row.clip_id}: {exc}"


def cmd_featurize(cfg: ExperimentConfig, manifest: Path) -> int:
    out = _out_dir(cfg)
    (out / "feat").mkdir(exist_ok=True)
    rows = corpus.filter_rows(read_manifest(manifest), cfg.run.durations, cfg.run.conditions)
    jobs, new_rows = [], []
    for r in rows:
        rel = f"feat/{r.clip_id}.smgt"
        jobs.append((resolve(manifest, r), r, out / rel, cfg.run.feature))
        new_rows.append(replace(r, path=rel))
    errors = _map(_featurize_one, jobs, cfg.run.workers)
    kept = [r for r, e in zip(new_rows, errors) if e is None]
    write_manifest(out / "manifest.csv", kept)
    return _summary("featurize", len(kept), [e for e in errors if e])


def _summary(name: str, n_ok: int, failures: list[str]) -> int:
    for f in failures:
        log.error("%s: %s", name, f)
    log.info("%s: %d written, %d failed", name, n_ok, len(failures))
    return EXIT_ITEMS if failures else EXIT_OK


def load_features(manifest: Path, rows: list[ManifestRow]) -> np.ndarray:
    return np.stack([load_tensor(resolve(manifest, r)) for r in rows])


def cmd_train(cfg: ExperimentConfig, manifest: Path | None) -> int:
    manifest = manifest or (Path(cfg.paths.train_manifest) if cfg.paths.train_manifest else None)
    if manifest is None:
        raise ConfigError("no manifest given (use --manifest or paths.train_manifest)")
    out = _out_dir(cfg)
    rows = read_manifest(manifest)
    for d in cfg.run.durations:
        sel = corpus.filter_rows(rows, (d,), cfg.run.conditions)
        if not sel:
            raise ConfigError(f"no rows for duration {d} s")
        x = load_features(manifest, sel)
        y = np.array([r.target for r in sel])
        model = SMGAANet(cfg.model, FRAMES_PER_DURATION[d], seed=cfg.train.seed)
        ckpt = out / f"model_{d:g}s.smgc"
        result = fit(
            model,
            x,
            y,
            cfg.train,
            log_path=out / f"train_log_{d:g}s.csv",
            checkpoint=lambda m, epoch: save_model(ckpt, m, {"duration": d, "epoch": epoch}),
        )
        log.info("train %g s: best epoch %d, validation EER %.4f", d, result.best_epoch, result.best_val_eer)
    return EXIT_OK


def _checkpoint_files(paths: list[Path]) -> list[Path]:
    files = []
    for p in paths:
        files.extend(sorted(p.glob("*.smgc")) if p.is_dir() else [p])
    if not files:
        raise ConfigError("no checkpoint files found")
    return files


def cmd_eval(cfg: ExperimentConfig, checkpoints: list[Path], manifest: Path | None) -> int:
    manifest = manifest or (Path(cfg.paths.eval_manifest) if cfg.paths.eval_manifest else None)
    if manifest is None:
        raise ConfigError("no manifest given (use --manifest or paths.eval_manifest)")
    out = _out_dir(cfg)
    models = {}
    for path in _checkpoint_files(checkpoints):
        model, meta = load_model(path)
        d = next(k for k, v in FRAMES_PER_DURATION.items() if v == model.n_frames)
        if d in models:
            raise ConfigError(f"two checkpoints for duration {d} s")
        models[d] = model
    rows = corpus.filter_rows(read_manifest(manifest), tuple(models), cfg.run.conditions)
    scores = []
    for d, model in sorted(models.items()):
        sel = [r for r in rows if r.duration == d]
        if not sel:
            continue
        s = evaluate_scores(model, load_features(manifest, sel))
        scores.extend(ScoreRow(r.clip_id, r.duration, r.condition, r.label, float(v)) for r, v in zip(sel, s))
    write_scores(out / "scores.csv", scores)
    report = build_report(scores, models)
    report.save(out / "report.csv")
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_inspect(cfg: ExperimentConfig) -> int:
    lines = [f"{'duration':>8} {'frames':>6} {'params':>10} {'FLOPs':>14} {'GFLOPs':>8}"]
    for d in cfg.run.durations:
        t = FRAMES_PER_DURATION[d]
        params = count_params(SMGAANet(cfg.model, t))
        flops = count_flops(cfg.model, d)
        lines.append(f"{d:>8g} {t:>6d} {params:>10d} {flops:>14d} {flops / 1e9:>8.3f}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def _setup_logging() -> None:
    name = os.environ.get("SMGAA_LOG", "info").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"SMGAA_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = resolve_config(args)
        if args.command == "synth":
            if args.n_per_class < 1:
                raise ConfigError("--n-per-class must be >= 1")
            return cmd_synth(cfg, args.n_per_class)
        if args.command == "degrade":
            return cmd_degrade(cfg, args.manifest)
        if args.command == "featurize":
            return cmd_featurize(cfg, args.manifest)
        if args.command == "train":
            return cmd_train(cfg, args.manifest)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.manifest)
        return cmd_inspect(cfg)
    except ConfigError as exc:
        print(f"smgaa {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"smgaa {args.command}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
