"""Command-line entry point covering every pipeline stage.

Subcommands: extract (clip -> face frames), flow (frames -> .flo fields),
colorize (.flo -> flow images), synth (labeled synthetic dataset), train,
eval, sweep (frame-count study with CSV/SVG reports), gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every run prints one
summary line per stage; machine-readable output goes to files only. The
optional DFFLOW_THREADS environment variable caps preprocessing workers;
results are identical at any worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import DfflowError, EmptyInput, NotEnoughFrames
from .experiment import (
    AccessAudit,
    SampleRecord,
    emit_report,
    frame_sweep,
    load_manifest,
    materialize_clips,
    preprocess_frames,
    split_dataset,
)
from .experiment import _fmt as fmt_metric
from .media_io import (
    FrameSequence,
    load_frame_dir,
    to_grayscale,
    write_frame_dir,
    write_image,
)
from .metrics import confusion, roc_auc, summary, write_roc_csv
from .model import (
    GRADCHECK_SEEDS,
    ModelConfig,
    TrainConfig,
    build_model,
    load_model,
    predict_score,
    reduced_gradcheck,
    save_model,
    train,
)
from .optical_flow import HsSettings, flow_to_rgb, horn_schunck, read_flo, write_flo
from .synth import gen_dataset

GRADCHECK_TOL = 1e-5


class Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _note(stage: str, message: str) -> None:
    print(f"{stage}: {message}")


def _threads() -> int:
    raw = os.environ.get("DFFLOW_THREADS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def _frame_counts(text: str) -> list[int]:
    try:
        counts = [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad frame count list {text!r}")
    if not counts:
        raise argparse.ArgumentTypeError("frame count list is empty")
    return counts


def _model_config(variant: str, size: int, seed: int) -> ModelConfig:
    kwargs = dict(variant=variant, frame_size=size, seed=seed)
    if variant == "of_rnn":
        kwargs["backbone"] = ()
    if variant == "of_cnn":
        kwargs["lstm_hidden"] = ()
    return ModelConfig(**kwargs)


def build_parser() -> Parser:
    parser = Parser(prog="dfflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("extract", help="decode a clip and write face-ROI frames")
    p.add_argument("--input", required=True, type=Path, help="Y4M file or frame directory")
    p.add_argument("--out", required=True, type=Path, help="output frame directory")
    p.add_argument("--frames", required=True, type=int, help="frames to sample uniformly")
    p.add_argument("--size", type=int, default=112, help="output side length (default 112)")
    p.add_argument("--roi", type=Path, default=None, help="face box sidecar file")

    p = sub.add_parser("flow", help="dense optical flow between consecutive frames")
    p.add_argument("--frames", required=True, type=Path, help="input frame directory")
    p.add_argument("--out", required=True, type=Path, help="output .flo directory")
    p.add_argument("--alpha", type=float, default=15.0, help="smoothness weight (default 15)")
    p.add_argument("--iters", type=int, default=200, help="max iterations (default 200)")
    p.add_argument("--tol", type=float, default=1e-4, help="convergence threshold (default 1e-4)")

    p = sub.add_parser("colorize", help="render .flo fields as flow images")
    p.add_argument("--flows", required=True, type=Path, help="input .flo directory")
    p.add_argument("--out", required=True, type=Path, help="output PNG directory")
    p.add_argument("--cap", type=float, default=None, help="fixed magnitude cap (default per-frame max)")

    p = sub.add_parser("synth", help="generate a labeled synthetic clip dataset")
    p.add_argument("--out", required=True, type=Path, help="dataset directory")
    p.add_argument("--real", required=True, type=int, help="coherent clip count")
    p.add_argument("--fake", required=True, type=int, help="inconsistent clip count")
    p.add_argument("--seed", required=True, type=int, help="base seed")
    p.add_argument("--frames", type=int, default=10, help="frames per clip (default 10)")
    p.add_argument("--size", type=int, default=112, help="frame side length (default 112)")

    p = sub.add_parser("train", help="train a detector on a manifest's train split")
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest CSV")
    p.add_argument("--variant", required=True, choices=("of_rnn", "of_cnn", "of_rnn_cnn"))
    p.add_argument("--epochs", required=True, type=int)
    p.add_argument("--batch", required=True, type=int)
    p.add_argument("--lr", type=float, default=1e-5, help="Adam learning rate (default 1e-5)")
    p.add_argument("--seed", required=True, type=int, help="split/init/shuffle seed")
    p.add_argument("--out", required=True, type=Path, help="model file (.dfnn)")
    p.add_argument("--frames", type=int, default=10, help="frames sampled per clip (default 10)")
    p.add_argument("--size", type=int, default=112, help="frame side length (default 112)")

    p = sub.add_parser("eval", help="evaluate a model on its manifest's test split")
    p.add_argument("--model", required=True, type=Path, help="model file (.dfnn)")
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest CSV")
    p.add_argument("--report", required=True, type=Path, help="report directory")

    p = sub.add_parser("sweep", help="frame-count sweep with CSV/SVG reports")
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest CSV")
    p.add_argument("--frame-counts", required=True, type=_frame_counts,
                   help="comma-separated counts, e.g. 4,6,10")
    p.add_argument("--report", required=True, type=Path, help="report directory")
    p.add_argument("--variant", choices=("of_rnn", "of_cnn", "of_rnn_cnn"),
                   default="of_rnn_cnn")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0, help="split/init/shuffle seed")
    p.add_argument("--size", type=int, default=112, help="frame side length (default 112)")

    p = sub.add_parser("gradcheck", help="finite-difference check of the model gradients")
    p.add_argument("--full", action="store_true", help="run all pinned seed pairs")

    return parser


def _cmd_extract(args) -> int:
    rec = SampleRecord(clip_path=args.input, label=0, roi_path=args.roi)
    frames = preprocess_frames(rec, args.frames, size=args.size)
    seq = FrameSequence(frames=frames, frame_indices=list(range(len(frames))),
                        source_id=str(args.input))
    paths = write_frame_dir(seq, args.out)
    _note("extract", f"wrote {len(paths)} frames to {args.out}")
    return 0


def _cmd_flow(args) -> int:
    seq = load_frame_dir(args.frames)
    if len(seq) < 2:
        raise NotEnoughFrames(f"{args.frames}: need at least 2 frames")
    gray = [to_grayscale(f) for f in seq.frames]
    settings = HsSettings(alpha=args.alpha, max_iters=args.iters, tol=args.tol)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, (a, b) in enumerate(zip(gray, gray[1:])):
        write_flo(horn_schunck(a, b, settings), args.out / f"{i:06d}.flo")
    _note("flow", f"wrote {len(gray) - 1} fields to {args.out}")
    return 0


def _cmd_colorize(args) -> int:
    paths = sorted(args.flows.glob("*.flo"))
    if not paths:
        raise EmptyInput(f"{args.flows}: no .flo files")
    args.out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        image = flow_to_rgb(read_flo(path), cap=args.cap)
        write_image(image, args.out / (path.stem + ".png"))
    _note("colorize", f"wrote {len(paths)} images to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    manifest = gen_dataset(args.real, args.fake, args.out, base_seed=args.seed,
                           frames=args.frames, size=args.size)
    _note("synth", f"{args.real} real + {args.fake} fake clips, manifest {manifest}")
    return 0


def _cmd_train(args) -> int:
    records = split_dataset(load_manifest(args.manifest), train_frac=0.8, seed=args.seed)
    train_recs = [r for r in records if r.split == "train"]
    n_test = sum(r.split == "test" for r in records)
    _note("split", f"{len(train_recs)} train / {n_test} test (seed {args.seed})")

    audit = AccessAudit()
    audit.phase = "train-prep"
    clips = materialize_clips(train_recs, args.frames, size=args.size,
                              audit=audit, threads=_threads())
    _note("pipeline", f"materialized {len(clips)} clips x {args.frames} frames")

    config = _model_config(args.variant, args.size, args.seed)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                     shuffle_seed=args.seed)
    model = build_model(config)
    model, history = train(model, [(c, r.label) for c, r in zip(clips, train_recs)], tc)
    loss, acc = history[-1]
    _note("train", f"{args.epochs} epochs, final loss {loss:.4f}, train accuracy {acc:.3f}")

    save_model(model, args.out, extra={"frames": args.frames, "split_seed": args.seed,
                                       "train_frac": 0.8})
    _note("save", str(args.out))
    return 0


def _cmd_eval(args) -> int:
    model, doc = load_model(args.model)
    frames = int(doc.get("frames", 10))
    split_seed = int(doc.get("split_seed", 0))
    train_frac = float(doc.get("train_frac", 0.8))
    size = int(doc.get("frame_size", 112))
    records = split_dataset(load_manifest(args.manifest), train_frac, split_seed)
    test_recs = [r for r in records if r.split == "test"]

    audit = AccessAudit()
    audit.phase = "test-eval"
    clips = materialize_clips(test_recs, frames, size=size, audit=audit,
                              threads=_threads())
    _note("pipeline", f"materialized {len(clips)} clips x {frames} frames")

    labels = [r.label for r in test_recs]
    scores = [predict_score(model, c) for c in clips]
    preds = [1 if s > 0.5 else 0 for s in scores]
    s = summary(confusion(labels, preds))
    curve = roc_auc(labels, scores)

    args.report.mkdir(parents=True, exist_ok=True)
    metrics_csv = args.report / "metrics.csv"
    with open(metrics_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("accuracy,precision,recall,f1,auc\n")
        fh.write(",".join(fmt_metric(v) for v in
                          (s.accuracy, s.precision, s.recall, s.f1, curve.auc)) + "\n")
    write_roc_csv(curve, args.report / "roc.csv")
    _note("eval", f"accuracy {s.accuracy:.3f}, auc {curve.auc:.3f} "
                  f"on {len(test_recs)} test clips; report in {args.report}")
    return 0


def _cmd_sweep(args) -> int:
    records = split_dataset(load_manifest(args.manifest), train_frac=0.8, seed=args.seed)
    config = _model_config(args.variant, args.size, args.seed)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                     shuffle_seed=args.seed)
    audit = AccessAudit()
    results = frame_sweep(records, args.frame_counts, config, tc, size=args.size,
                          audit=audit, threads=_threads())
    for r in results:
        _note("sweep", f"frames {r.frames}: accuracy {r.accuracy:.3f}, auc {r.auc:.3f}")
    paths = emit_report(results, args.report)
    _note("report", f"wrote {len(paths)} files to {args.report}")
    return 0


def _cmd_gradcheck(args) -> int:
    pairs = GRADCHECK_SEEDS if args.full else GRADCHECK_SEEDS[:1]
    worst = max(reduced_gradcheck(w, c) for w, c in pairs)
    _note("gradcheck", f"max relative error {worst:.3e} over {len(pairs)} "
                       f"seed pair(s), tolerance {GRADCHECK_TOL:.0e}")
    return 0 if worst <= GRADCHECK_TOL else 2


_COMMANDS = {
    "extract": _cmd_extract,
    "flow": _cmd_flow,
    "colorize": _cmd_colorize,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DfflowError, OSError) as exc:
        print(f"dfflow {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
