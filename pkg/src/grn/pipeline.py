"""Self-learning orchestration.

Stage order: (1) train the segmenter on labeled data, (2) pseudo-label
every image with it, (3) train the rectifier on labeled (image, pseudo,
truth) triples, (4) rectify the unlabeled pseudo-labels, (5) retrain the
segmenter from scratch on labeled truth plus rectified pseudo-labels.
With `ablate_raw` an extra segmenter retrains on the raw (unrectified)
pseudo-labels for comparison. Metrics for every stage are measured on
the unlabeled samples' hidden ground truth, which no training stage may
read.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_into, save_checkpoint
from .corpus import (CATEGORY_NAMES, Corpus, Sample, load_corpus,
                     load_eval_labels)
from .errors import ConfigError, StageError
from .metrics import MetricsReport, evaluate_pairs, write_metrics_tsv
from .netpbm import write_pgm
from .optim import SgdState
from .rectnet import (RectNetParams, assemble_input, init_rectnet,
                      pseudo_probs, rectify_forward, train_rectifier)
from .segnet import (SegNetParams, init_segnet, predict_mask, train_segmenter)

LABELED_FRACTION_PRESETS = {"1/8": 0.125, "1/4": 0.25, "1/2": 0.5}


@dataclass
class PipelineConfig:
    data_dir: str
    out_dir: str
    seed: int = 0
    snet_epochs: int = 40
    rnet_epochs: int = 40
    retrain_epochs: int = 40
    base_lr: float = 0.007
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_power: float = 0.9
    d: int = 64
    n_high: int = 3
    alpha: float = 1.0
    snet_width: int = 16
    rnet_width: int = 16
    cprime: int = 16
    augment: bool = True
    hard_pseudo: bool = False
    ablate_raw: bool = False
    two_pass_assist: bool = True
    rounds: int = 1
    warm_start: bool = False
    threads: int = 1

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "PipelineConfig":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        kwargs = {}
        for f in fields(cls):
            if f.name not in kv:
                continue
            raw = kv[f.name]
            if f.type == "bool":
                kwargs[f.name] = raw in ("True", "true", "1")
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class PipelineRun:
    config: PipelineConfig
    out_dir: Path
    miou: dict[str, float] = field(default_factory=dict)
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    losses: dict[str, list[float]] = field(default_factory=dict)


def _map_samples(fn, samples, threads: int):
    """Apply fn over samples, optionally threaded; results in input order."""
    if threads <= 1:
        return [fn(s) for s in samples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, samples))


def _new_sgd(cfg: PipelineConfig, steps: int) -> SgdState:
    return SgdState(max_iter=max(steps, 1), base_lr=cfg.base_lr,
                    momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                    power=cfg.lr_power)


def pseudo_label_corpus(corpus: Corpus, seg: SegNetParams,
                        threads: int = 1) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Predicted (probs, argmax labels) for every sample, keyed by id."""
    results = _map_samples(lambda s: predict_mask(s.image, seg),
                           corpus.samples, threads)
    return {s.id: r for s, r in zip(corpus.samples, results)}


def rectify_unlabeled(samples: list[Sample],
                      pseudo: dict[str, tuple[np.ndarray, np.ndarray]],
                      rnet: RectNetParams, hard_pseudo: bool = False,
                      threads: int = 1) -> dict[str, np.ndarray]:
    """Rectified argmax label for each unlabeled sample."""
    def one(s: Sample) -> np.ndarray:
        if s.id not in pseudo:
            raise ConfigError(f"sample {s.id} has no pseudo-label")
        probs, labels = pseudo[s.id]
        mask = pseudo_probs(labels, rnet.c) if hard_pseudo else probs
        result = rectify_forward(assemble_input(s.image, mask), rnet)
        return np.argmax(result.logits.data, axis=0).astype(np.int64)

    results = _map_samples(one, samples, threads)
    return {s.id: r for s, r in zip(samples, results)}


def _evaluate(seg: SegNetParams, samples: list[Sample],
              hidden: dict[str, np.ndarray], c: int,
              threads: int = 1) -> MetricsReport:
    preds = _map_samples(lambda s: predict_mask(s.image, seg)[1], samples, threads)
    pairs = [(pred, hidden[s.id]) for s, pred in zip(samples, preds)]
    return evaluate_pairs(pairs, c)


def run_pipeline(cfg: PipelineConfig) -> PipelineRun:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    run = PipelineRun(config=cfg, out_dir=out)

    corpus = load_corpus(cfg.data_dir)  # training view: unlabeled GT hidden
    labeled = corpus.labeled()
    unlabeled = corpus.unlabeled()
    if not labeled:
        raise StageError("load", "no labeled samples in corpus")
    if cfg.rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {cfg.rounds}")

    def stage(name, fn):
        try:
            return fn()
        except Exception as e:  # noqa: BLE001 - re-tag for the caller
            if isinstance(e, StageError):
                raise
            raise StageError(name, str(e)) from e

    # 1. train the segmenter on labeled data
    def train_first():
        seg = init_segnet(corpus.c, width=cfg.snet_width, seed=cfg.seed)
        state = _new_sgd(cfg, cfg.snet_epochs * len(labeled))
        rng = np.random.default_rng([cfg.seed, 11])
        log = train_segmenter([(s.image, s.label) for s in labeled], seg, state,
                              cfg.snet_epochs, rng, pairs=corpus.pairs,
                              augment=cfg.augment)
        save_checkpoint(out / "snet_stage1.ckpt", seg.named())
        return seg, log
    seg1, log1 = stage("train-seg", train_first)
    run.losses["train-seg"] = log1

    current_seg = seg1
    pseudo = None
    rectified = None
    for round_idx in range(cfg.rounds):
        tag = "" if cfg.rounds == 1 else f"_r{round_idx}"

        # 2. pseudo-label labeled and unlabeled images
        def predict_all(seg=current_seg):
            p = pseudo_label_corpus(corpus, seg, cfg.threads)
            pdir = out / f"pseudo_labels{tag}"
            pdir.mkdir(exist_ok=True)
            for sid, (_, labels) in sorted(p.items()):
                write_pgm(pdir / f"{sid}.pgm", labels.astype(np.uint8))
            return p
        pseudo = stage("pseudo-label", predict_all)

        # 3. train the rectifier on labeled triples
        def train_rect():
            rnet = init_rectnet(corpus.c, corpus.size, corpus.size, d=cfg.d,
                                n_high=cfg.n_high, cprime=cfg.cprime,
                                width=cfg.rnet_width, alpha=cfg.alpha,
                                seed=cfg.seed + round_idx,
                                two_pass_assist=cfg.two_pass_assist)
            triples = []
            for s in labeled:
                probs, labels = pseudo[s.id]
                mask = pseudo_probs(labels, corpus.c) if cfg.hard_pseudo else probs
                triples.append((s.image, mask, s.label))
            state = _new_sgd(cfg, cfg.rnet_epochs * len(triples))
            rng = np.random.default_rng([cfg.seed, 13, round_idx])
            log = train_rectifier(triples, rnet, state, cfg.rnet_epochs, rng)
            save_checkpoint(out / f"rnet{tag}.ckpt", rnet.named())
            return rnet, log
        rnet, rlog = stage("train-rect", train_rect)
        run.losses[f"train-rect{tag}"] = rlog

        # 4. rectify unlabeled pseudo-labels
        def rectify():
            r = rectify_unlabeled(unlabeled, pseudo, rnet,
                                  hard_pseudo=cfg.hard_pseudo, threads=cfg.threads)
            rdir = out / f"rectified_labels{tag}"
            rdir.mkdir(exist_ok=True)
            for sid, labels in sorted(r.items()):
                write_pgm(rdir / f"{sid}.pgm", labels.astype(np.uint8))
            return r
        rectified = stage("rectify", rectify)

        # 5. retrain the segmenter on labeled truth + rectified pseudo-labels
        def retrain():
            seg = init_segnet(corpus.c, width=cfg.snet_width,
                              seed=cfg.seed + 1 + round_idx)
            if cfg.warm_start:
                load_into(seg.named(), out / "snet_stage1.ckpt")
            data = [(s.image, s.label) for s in labeled]
            data += [(s.image, rectified[s.id]) for s in unlabeled]
            state = _new_sgd(cfg, cfg.retrain_epochs * len(data))
            rng = np.random.default_rng([cfg.seed, 17, round_idx])
            log = train_segmenter(data, seg, state, cfg.retrain_epochs, rng,
                                  pairs=corpus.pairs, augment=cfg.augment)
            save_checkpoint(out / f"snet_retrained{tag}.ckpt", seg.named())
            return seg, log
        current_seg, retrain_log = stage("retrain", retrain)
        run.losses[f"retrain{tag}"] = retrain_log

    seg2 = current_seg

    # optional ablation: retrain on raw (unrectified) pseudo-labels
    seg2_raw = None
    if cfg.ablate_raw:
        def retrain_raw():
            seg = init_segnet(corpus.c, width=cfg.snet_width, seed=cfg.seed + 1)
            data = [(s.image, s.label) for s in labeled]
            data += [(s.image, pseudo[s.id][1]) for s in unlabeled]
            state = _new_sgd(cfg, cfg.retrain_epochs * len(data))
            rng = np.random.default_rng([cfg.seed, 17, 0])
            train_segmenter(data, seg, state, cfg.retrain_epochs, rng,
                            pairs=corpus.pairs, augment=cfg.augment)
            save_checkpoint(out / "snet_retrained_raw.ckpt", seg.named())
            return seg
        seg2_raw = stage("retrain-raw", retrain_raw)

    # evaluation on hidden ground truth of the unlabeled samples
    def evaluate():
        if not unlabeled:
            return {}
        hidden = load_eval_labels(corpus.root)
        stages = {"baseline": seg1, "rectified_retrain": seg2}
        if seg2_raw is not None:
            stages["raw_retrain"] = seg2_raw
        reports = {}
        for name, seg in stages.items():
            rep = _evaluate(seg, unlabeled, hidden, corpus.c, cfg.threads)
            reports[name] = rep
            write_metrics_tsv(out / f"metrics_{name}.tsv", rep, CATEGORY_NAMES)
        return reports
    run.reports = stage("eval", evaluate)
    run.miou = {name: rep.mean_iou for name, rep in run.reports.items()}

    order = ["baseline", "raw_retrain", "rectified_retrain"]
    lines = ["stage\tpixel_accuracy\tmean_accuracy\tmean_iou"]
    for name in order:
        if name in run.reports:
            rep = run.reports[name]
            lines.append(f"{name}\t{rep.pixel_accuracy:.6f}"
                         f"\t{rep.mean_accuracy:.6f}\t{rep.mean_iou:.6f}")
    (out / "metrics.tsv").write_text("\n".join(lines) + "\n")
    return run
