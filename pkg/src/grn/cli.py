"""Command-line surface: data generation, stage-by-stage runs, the full
pipeline, evaluation, gradient checking, and mask export.

Exit codes: 0 success, 1 usage error, 2 data/contract/config error. All
randomness derives from --seed (falling back to the GRN_SEED environment
variable, then 0).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_into, save_checkpoint
from .corpus import (CATEGORY_NAMES, CorpusSpec, generate, load_corpus,
                     load_eval_labels, save_corpus)
from .errors import ConfigError, GrnError
from .gradcheck import grad_check
from .metrics import evaluate_pairs, write_metrics_tsv
from .netpbm import read_pgm, write_ppm
from .optim import SgdState
from .pipeline import PipelineConfig, run_pipeline
from .rectnet import (assemble_input, format_diagnostics, init_rectnet,
                      pseudo_probs, rectify_forward, train_rectifier)
from .segnet import init_segnet, predict_mask, train_segmenter

DEFAULT_PALETTE = {
    0: (0, 0, 0), 1: (230, 190, 150), 2: (50, 90, 180), 3: (220, 60, 60),
    4: (240, 160, 40), 5: (60, 170, 90), 6: (150, 220, 120), 7: (170, 90, 200),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _seed_default() -> int:
    return int(os.environ.get("GRN_SEED", "0"))


def _build_parser() -> _Parser:
    p = _Parser(prog="grn", description=__doc__)
    p.add_argument("--version", action="version", version=f"grn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)

    g = sub.add_parser("gen-data", help="generate a synthetic corpus")
    common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--n-labeled", type=int, default=64)
    g.add_argument("--n-unlabeled", type=int, default=448)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--classes", type=int, default=8)

    t = sub.add_parser("train-seg", help="train the segmenter on labeled data")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--width", type=int, default=16)
    t.add_argument("--lr", type=float, default=0.007)
    t.add_argument("--no-augment", action="store_true")

    pl = sub.add_parser("pseudo-label", help="predict masks for all samples")
    common(pl)
    pl.add_argument("--data", required=True)
    pl.add_argument("--ckpt", required=True)
    pl.add_argument("--out", required=True, help="directory for PGM label maps")
    pl.add_argument("--width", type=int, default=16)

    tr = sub.add_parser("train-rect", help="train the rectifier on labeled triples")
    common(tr)
    tr.add_argument("--data", required=True)
    tr.add_argument("--pseudo", required=True, help="directory of pseudo-label PGMs")
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--epochs", type=int, default=40)
    tr.add_argument("--d", type=int, default=64)
    tr.add_argument("--n-high", type=int, default=3)
    tr.add_argument("--alpha", type=float, default=1.0)
    tr.add_argument("--lr", type=float, default=0.007)

    r = sub.add_parser("rectify", help="rectify pseudo-labels of unlabeled samples")
    common(r)
    r.add_argument("--data", required=True)
    r.add_argument("--pseudo", required=True)
    r.add_argument("--rnet", required=True)
    r.add_argument("--out", required=True, help="directory for rectified PGMs")
    r.add_argument("--d", type=int, default=64)
    r.add_argument("--n-high", type=int, default=3)
    r.add_argument("--alpha", type=float, default=1.0)
    r.add_argument("--diagnostics", help="optional text file for channel weights")

    rt = sub.add_parser("retrain", help="retrain the segmenter on truth + rectified labels")
    common(rt)
    rt.add_argument("--data", required=True)
    rt.add_argument("--rectified", required=True, help="directory of rectified PGMs")
    rt.add_argument("--out", required=True)
    rt.add_argument("--epochs", type=int, default=40)
    rt.add_argument("--width", type=int, default=16)
    rt.add_argument("--lr", type=float, default=0.007)
    rt.add_argument("--no-augment", action="store_true")

    pp = sub.add_parser("pipeline", help="run all stages end to end")
    common(pp)
    pp.add_argument("--data", required=True)
    pp.add_argument("--out", required=True, help="run directory")
    pp.add_argument("--config", help="key=value config file; flags override")
    pp.add_argument("--ablate-raw", action="store_true")
    pp.add_argument("--epochs", type=int, default=None,
                    help="override all three stage epoch counts")

    ev = sub.add_parser("eval", help="evaluate a segmenter checkpoint")
    common(ev)
    ev.add_argument("--data", required=True)
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--out", required=True, help="metrics TSV path")
    ev.add_argument("--protocol", choices=["lip", "atr"], default="lip")
    ev.add_argument("--split", choices=["labeled", "unlabeled", "all"],
                    default="unlabeled")
    ev.add_argument("--width", type=int, default=16)

    gc = sub.add_parser("grad-check", help="verify gradients against finite differences")
    common(gc)
    gc.add_argument("--tolerance", type=float, default=1e-4)

    em = sub.add_parser("export-masks", help="render a PGM label map as a colored PPM")
    common(em)
    em.add_argument("--labels", required=True)
    em.add_argument("--out", required=True)
    return p


def export_mask(labels: np.ndarray, palette: dict[int, tuple[int, int, int]],
                path) -> None:
    """Write a label map as a fixed-palette PPM image."""
    present = np.unique(labels)
    for v in present:
        if int(v) not in palette:
            raise ConfigError(f"palette lacks an entry for category {int(v)}")
    lut = np.zeros((int(max(palette)) + 1, 3), dtype=np.uint8)
    for k, rgb in palette.items():
        lut[k] = rgb
    write_ppm(path, lut[labels])


def _cmd_gen_data(args) -> int:
    spec = CorpusSpec(n_labeled=args.n_labeled, n_unlabeled=args.n_unlabeled,
                      size=args.size, c=args.classes, seed=args.seed)
    corpus = generate(spec)
    save_corpus(args.out, corpus)
    print(f"wrote {len(corpus.samples)} samples to {args.out}")
    return 0


def _cmd_train_seg(args) -> int:
    corpus = load_corpus(args.data)
    labeled = corpus.labeled()
    seg = init_segnet(corpus.c, width=args.width, seed=args.seed)
    state = SgdState(max_iter=max(1, args.epochs * len(labeled)), base_lr=args.lr)
    rng = np.random.default_rng([args.seed, 11])
    log = train_segmenter([(s.image, s.label) for s in labeled], seg, state,
                          args.epochs, rng, pairs=corpus.pairs,
                          augment=not args.no_augment)
    save_checkpoint(args.out, seg.named())
    if log:
        print(f"final training loss {log[-1]:.6f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_pseudo_label(args) -> int:
    corpus = load_corpus(args.data)
    seg = init_segnet(corpus.c, width=args.width, seed=args.seed)
    load_into(seg.named(), args.ckpt)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    from .netpbm import write_pgm
    for s in corpus.samples:
        _, labels = predict_mask(s.image, seg)
        write_pgm(outdir / f"{s.id}.pgm", labels.astype(np.uint8))
    print(f"wrote {len(corpus.samples)} pseudo-labels to {args.out}")
    return 0


def _load_pgm_dir(directory, ids) -> dict[str, np.ndarray]:
    out = {}
    for sid in ids:
        out[sid] = read_pgm(Path(directory) / f"{sid}.pgm").astype(np.int64)
    return out


def _cmd_train_rect(args) -> int:
    corpus = load_corpus(args.data)
    labeled = corpus.labeled()
    pseudo = _load_pgm_dir(args.pseudo, [s.id for s in labeled])
    rnet = init_rectnet(corpus.c, corpus.size, corpus.size, d=args.d,
                        n_high=args.n_high, alpha=args.alpha, seed=args.seed)
    triples = [(s.image, pseudo_probs(pseudo[s.id], corpus.c), s.label)
               for s in labeled]
    state = SgdState(max_iter=max(1, args.epochs * len(triples)), base_lr=args.lr)
    rng = np.random.default_rng([args.seed, 13])
    log = train_rectifier(triples, rnet, state, args.epochs, rng)
    save_checkpoint(args.out, rnet.named())
    if log:
        print(f"final training loss {log[-1]:.6f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_rectify(args) -> int:
    corpus = load_corpus(args.data)
    unlabeled = corpus.unlabeled()
    pseudo = _load_pgm_dir(args.pseudo, [s.id for s in unlabeled])
    rnet = init_rectnet(corpus.c, corpus.size, corpus.size, d=args.d,
                        n_high=args.n_high, alpha=args.alpha, seed=args.seed)
    load_into(rnet.named(), args.rnet)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    from .netpbm import write_pgm
    diag_lines = []
    for s in unlabeled:
        mask = pseudo_probs(pseudo[s.id], corpus.c)
        result = rectify_forward(assemble_input(s.image, mask), rnet)
        labels = np.argmax(result.logits.data, axis=0).astype(np.uint8)
        write_pgm(outdir / f"{s.id}.pgm", labels)
        if args.diagnostics:
            diag_lines.append(f"# {s.id}\n{format_diagnostics(result)}")
    if args.diagnostics:
        Path(args.diagnostics).write_text("".join(diag_lines))
    print(f"wrote {len(unlabeled)} rectified labels to {args.out}")
    return 0


def _cmd_retrain(args) -> int:
    corpus = load_corpus(args.data)
    labeled = corpus.labeled()
    unlabeled = corpus.unlabeled()
    rectified = _load_pgm_dir(args.rectified, [s.id for s in unlabeled])
    seg = init_segnet(corpus.c, width=args.width, seed=args.seed + 1)
    data = [(s.image, s.label) for s in labeled]
    data += [(s.image, rectified[s.id]) for s in unlabeled]
    state = SgdState(max_iter=max(1, args.epochs * len(data)), base_lr=args.lr)
    rng = np.random.default_rng([args.seed, 17])
    train_segmenter(data, seg, state, args.epochs, rng, pairs=corpus.pairs,
                    augment=not args.no_augment)
    save_checkpoint(args.out, seg.named())
    print(f"wrote {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    overrides = dict(data_dir=args.data, out_dir=args.out, seed=args.seed,
                     threads=args.threads)
    if args.ablate_raw:
        overrides["ablate_raw"] = True
    if args.epochs is not None:
        overrides.update(snet_epochs=args.epochs, rnet_epochs=args.epochs,
                         retrain_epochs=args.epochs)
    if args.config:
        cfg = PipelineConfig.from_text(Path(args.config).read_text(), **overrides)
    else:
        cfg = PipelineConfig(**overrides)
    run = run_pipeline(cfg)
    for name, miou in sorted(run.miou.items()):
        print(f"{name}\tmean_iou\t{miou:.6f}")
    print(f"run artifacts in {run.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    corpus = load_corpus(args.data)
    if args.split == "labeled":
        samples = corpus.labeled()
    elif args.split == "unlabeled":
        samples = corpus.unlabeled()
    else:
        samples = corpus.samples
    hidden = load_eval_labels(corpus.root)
    seg = init_segnet(corpus.c, width=args.width, seed=args.seed)
    load_into(seg.named(), args.ckpt)
    pairs = [(predict_mask(s.image, seg)[1], hidden[s.id])
             for s in samples if s.id in hidden]
    rep = evaluate_pairs(pairs, corpus.c, args.protocol)
    write_metrics_tsv(args.out, rep, CATEGORY_NAMES)
    print(f"pixel_accuracy {rep.pixel_accuracy:.6f}")
    print(f"mean_iou {rep.mean_iou:.6f}")
    return 0


def _cmd_grad_check(args) -> int:
    from .verification import full_gradient_report
    report = full_gradient_report(seed=args.seed)
    worst = 0.0
    for name, err in report.items():
        print(f"{name}\t{err:.3e}")
        worst = max(worst, err)
    print(f"max_relative_error\t{worst:.3e}")
    if worst > args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance}", file=sys.stderr)
        return 2
    return 0


def _cmd_export_masks(args) -> int:
    labels = read_pgm(args.labels)
    export_mask(labels, DEFAULT_PALETTE, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-seg": _cmd_train_seg,
    "pseudo-label": _cmd_pseudo_label,
    "train-rect": _cmd_train_rect,
    "rectify": _cmd_rectify,
    "retrain": _cmd_retrain,
    "pipeline": _cmd_pipeline,
    "eval": _cmd_eval,
    "grad-check": _cmd_grad_check,
    "export-masks": _cmd_export_masks,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if getattr(args, "seed", None) is None:
        args.seed = _seed_default()
    try:
        return _COMMANDS[args.command](args)
    except GrnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
