"""Command-line pipeline: augment, featurize, train, score, evaluate.

Every stage reads the same config file and writes under its ``output_dir``::

    augmented/   train.txt, wavs, errors.txt, snr.tsv
    features/    <utt_id>.cqt
    model/       lcnn.ckpt, train_log.tsv
    scores/      eval.txt
    results/     result.txt, det.csv

Exit codes: 0 success, 1 usage or config error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio import DatasetManifest, parse_protocol, read_wav, write_protocol
from .augmentation import AugmentationError, AugmentationPlan, dasc_augment
from .config import PLANS, ConfigError, PipelineConfig, load_config, write_config_text
from .cqt import FeatureStore, extract_features
from .lcnn import BONAFIDE, SPOOF, Lcnn, score_set, train
from .metrics import evaluate, read_asv_operating_point, read_scores, split_by_key, \
    write_det_csv, write_scores
from .synth import write_corpus
from .trend import TREND_LAYERS

log = logging.getLogger("compandaug")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class StageError(RuntimeError):
    """A data problem that stops a stage (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


# --- output layout ---------------------------------------------------------

def _aug_dir(cfg: PipelineConfig) -> Path:
    return cfg.output_dir / "augmented"


def _aug_protocol(cfg: PipelineConfig) -> Path:
    return _aug_dir(cfg) / "train.txt"


def _store(cfg: PipelineConfig) -> FeatureStore:
    return FeatureStore(cfg.output_dir / "features")


def _checkpoint(cfg: PipelineConfig) -> Path:
    return cfg.output_dir / "model" / "lcnn.ckpt"


def _score_file(cfg: PipelineConfig) -> Path:
    return cfg.output_dir / "scores" / "eval.txt"


def _require(path: Path, what: str, stage: str) -> Path:
    if not path.exists():
        raise StageError("%s not found at %s; run `compandaug %s` first" % (what, path, stage))
    return path


def _train_manifest(cfg: PipelineConfig) -> DatasetManifest:
    path = _require(_aug_protocol(cfg), "augmented training manifest", "augment")
    return parse_protocol(path, "train", _aug_dir(cfg))


def _dev_manifest(cfg: PipelineConfig) -> DatasetManifest | None:
    p = cfg.paths
    if p.dev_protocol is None:
        return None
    return parse_protocol(p.dev_protocol, "development", p.dev_audio)


def _eval_manifest(cfg: PipelineConfig) -> DatasetManifest:
    p = cfg.paths
    if p.eval_protocol is None:
        raise ConfigError("[paths] eval_protocol is required for this stage")
    return parse_protocol(p.eval_protocol, "evaluation", p.eval_audio)


def _load_features(cfg: PipelineConfig, manifest: DatasetManifest):
    store = _store(cfg)
    missing = [r.utt_id for r in manifest.records if r.utt_id not in store]
    if missing:
        raise StageError("%d %s records have no features (first: %s); run `compandaug "
                         "featurize` first" % (len(missing), manifest.subset, missing[0]))
    x = np.stack([store.load(r.utt_id) for r in manifest.records])
    y = np.array([BONAFIDE if r.is_bonafide else SPOOF for r in manifest.records])
    return x, y


# --- stages ----------------------------------------------------------------

def cmd_augment(cfg: PipelineConfig, plan: str | None = None, snr: float | None = None,
                ) -> int:
    aug = cfg.augment
    if plan is not None:
        aug = dataclasses.replace(aug, plan=plan)
    if snr is not None:
        aug = dataclasses.replace(aug, snr_db=snr)
    p = cfg.paths
    manifest = parse_protocol(p.train_protocol, "train", p.train_audio)
    out = _aug_dir(cfg)
    if aug.plan == "dasc":
        methods = AugmentationPlan.dasc(out, cfg.seed, aug.mode)
    elif aug.plan == "noise":
        methods = AugmentationPlan.noise(out, aug.noise_sources, aug.snr_db, cfg.seed)
    else:
        methods = AugmentationPlan([], out, cfg.seed)
    try:
        augmented, report = dasc_augment(manifest, methods, jobs=cfg.jobs)
    except AugmentationError as exc:
        raise StageError(str(exc)) from None
    write_protocol(augmented, _aug_protocol(cfg))
    report.write(out / "errors.txt")
    if report.measured_snr:
        with open(out / "snr.tsv", "w", encoding="utf-8") as fh:
            for utt, value in report.measured_snr.items():
                fh.write("%s\t%.4f\n" % (utt, value))
                log.info("%s measured SNR %.3f dB", utt, value)
    log.info("augment (%s): %d records -> %d records in %s", aug.plan, len(manifest),
             len(augmented), out)
    if not report.ok:
        for utt, msg in report.errors:
            log.error("augment failed for %s: %s", utt, msg)
        log.error("%d records failed; see %s", len(report.errors), out / "errors.txt")
        return EXIT_DATA
    return EXIT_OK


def _featurize_manifest(cfg: PipelineConfig, manifest: DatasetManifest, skip_existing: bool):
    store = _store(cfg)

    def work(rec):
        if skip_existing and rec.utt_id in store:
            return "skipped", None
        try:
            clip = read_wav(manifest.audio_path(rec), cfg.cqt.sample_rate)
            store.save(rec.utt_id, extract_features(clip, cfg.cqt, method="fft"))
        except (OSError, ValueError) as exc:
            return "error", str(exc)
        return "written", None

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(work, manifest.records))
    else:
        results = [work(r) for r in manifest.records]
    counts = {"written": 0, "skipped": 0, "error": 0}
    errors = []
    for rec, (status, msg) in zip(manifest.records, results):
        counts[status] += 1
        if msg is not None:
            errors.append((rec.utt_id, msg))
    return counts, errors


def cmd_featurize(cfg: PipelineConfig, subsets=("train", "dev", "eval"),
                  skip_existing: bool | None = None) -> int:
    skip = cfg.skip_existing if skip_existing is None else skip_existing
    manifests = []
    if "train" in subsets:
        manifests.append(_train_manifest(cfg))
    if "dev" in subsets and cfg.paths.dev_protocol is not None:
        manifests.append(_dev_manifest(cfg))
    if "eval" in subsets and cfg.paths.eval_protocol is not None:
        manifests.append(_eval_manifest(cfg))
    all_errors = []
    for manifest in manifests:
        counts, errors = _featurize_manifest(cfg, manifest, skip)
        log.info("featurize %s: %d written, %d skipped, %d failed", manifest.subset,
                 counts["written"], counts["skipped"], counts["error"])
        all_errors += errors
    err_path = cfg.output_dir / "features" / "errors.txt"
    err_path.parent.mkdir(parents=True, exist_ok=True)
    with open(err_path, "w", encoding="utf-8") as fh:
        for utt, msg in all_errors:
            fh.write("%s\t%s\n" % (utt, msg))
            log.error("featurize failed for %s: %s", utt, msg)
    return EXIT_DATA if all_errors else EXIT_OK


def cmd_train(cfg: PipelineConfig) -> int:
    x, y = _load_features(cfg, _train_manifest(cfg))
    dev = _dev_manifest(cfg)
    dev_x = dev_y = None
    if dev is not None:
        dev_x, dev_y = _load_features(cfg, dev)
    model = Lcnn(cfg.model, seed=cfg.seed)
    log.info("training %d-parameter LCNN on %d examples", model.n_params(), len(y))
    try:
        model, history = train(model, x, y, cfg.train, dev_x, dev_y)
    except ValueError as exc:
        raise StageError(str(exc)) from None
    model.save(_checkpoint(cfg))
    (_checkpoint(cfg).parent / "train_log.tsv").write_text(history.to_text(), encoding="utf-8")
    log.info("saved %s (epoch %d)", _checkpoint(cfg), history.best_epoch)
    return EXIT_OK


def cmd_score(cfg: PipelineConfig) -> int:
    model = Lcnn.load(_require(_checkpoint(cfg), "model checkpoint", "train"))
    manifest = _eval_manifest(cfg)
    records, errors = score_set(model, manifest, _store(cfg))
    if errors:
        for utt, msg in errors[:5]:
            log.error("no features for %s: %s", utt, msg)
        raise StageError("%d evaluation records have no features; run `compandaug featurize` "
                         "first" % len(errors))
    write_scores([(r.utt_id, r.score) for r in records], _score_file(cfg))
    log.info("wrote %d scores to %s", len(records), _score_file(cfg))
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, scores_path=None, protocol_path=None) -> int:
    scores_path = Path(scores_path) if scores_path else _require(_score_file(cfg), "score file",
                                                               "score")
    if protocol_path:
        labels = parse_protocol(protocol_path, "evaluation").labels()
    else:
        labels = _eval_manifest(cfg).labels()
    bona, spoof = split_by_key(read_scores(scores_path), labels)
    cost = cfg.tdcf if cfg.asv_file is None else read_asv_operating_point(cfg.asv_file, cfg.tdcf)
    result = evaluate(bona, spoof, cost)
    out = cfg.output_dir / "results"
    out.mkdir(parents=True, exist_ok=True)
    write_det_csv(result.det_points, out / "det.csv")
    (out / "result.txt").write_text(result.to_text(), encoding="utf-8")
    print("EER: %.3f %%" % (100.0 * result.eer))
    print("min t-DCF: %.5f" % result.min_tdcf)
    if not (math.isfinite(result.eer) and math.isfinite(result.min_tdcf)):
        return EXIT_DATA
    return EXIT_OK


def cmd_run(cfg: PipelineConfig) -> int:
    for stage in (cmd_augment, cmd_featurize, cmd_train, cmd_score, cmd_evaluate):
        code = stage(cfg)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def cmd_synth(out_dir, n_train: int = 10, n_dev: int = 6, n_eval: int = 6, seed: int = 0,
              ) -> int:
    """Write a small synthetic corpus plus a ready-to-run config."""
    out_dir = Path(out_dir)
    sizes = {"train": n_train, "development": n_dev, "evaluation": n_eval}
    for k, (subset, n) in enumerate(sizes.items()):
        if n < 2:
            raise ConfigError("each subset needs at least 2 clips")
        write_corpus(out_dir / "data", subset, n // 2, n - n // 2, seed * 10 + k)
    paths = {"train_protocol": "data/train.txt", "train_audio": "data/train",
             "dev_protocol": "data/development.txt", "dev_audio": "data/development",
             "eval_protocol": "data/evaluation.txt", "eval_audio": "data/evaluation"}
    extra = {"augment": {"plan": "dasc"},
             "model": {"layers": TREND_LAYERS},
             "train": {"batch_size": "8", "epochs": "5", "learning_rate": "0.001"}}
    (out_dir / "config.ini").write_text(write_config_text(paths, "out", seed, extra),
                                        encoding="utf-8")
    print(out_dir / "config.ini")
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline INI file")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--jobs", type=int, help="override [run] jobs")

    parser = _Parser(prog="compandaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", parents=[common], help="expand the training set")
    p.add_argument("--plan", choices=PLANS)
    p.add_argument("--snr", type=float, help="noise plan SNR in dB")
    p = sub.add_parser("featurize", parents=[common], help="extract CQT LPS features")
    p.add_argument("--set", dest="subsets", choices=("train", "dev", "eval"), action="append")
    p.add_argument("--skip-existing", action="store_true", default=None)
    sub.add_parser("train", parents=[common], help="train the LCNN")
    sub.add_parser("score", parents=[common], help="score the evaluation set")
    p = sub.add_parser("evaluate", parents=[common], help="EER and min t-DCF")
    p.add_argument("--scores", help="score file (default: output of `score`)")
    p.add_argument("--protocol", help="key file (default: eval_protocol)")
    sub.add_parser("run", parents=[common], help="all stages in order")
    p = sub.add_parser("synth", help="write a synthetic fixture corpus and config")
    p.add_argument("out_dir")
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--n-dev", type=int, default=6)
    p.add_argument("--n-eval", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args.out_dir, args.n_train, args.n_dev, args.n_eval, args.seed)
        cfg = load_config(args.config).with_overrides(args.seed, args.jobs)
        cfg.validate()
        if args.command == "augment":
            return cmd_augment(cfg, args.plan, args.snr)
        if args.command == "featurize":
            return cmd_featurize(cfg, tuple(args.subsets or ("train", "dev", "eval")),
                                 args.skip_existing)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.scores, args.protocol)
        return {"train": cmd_train, "score": cmd_score, "run": cmd_run}[args.command](cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (StageError, OSError, ValueError, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
