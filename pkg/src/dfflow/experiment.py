"""Manifest-driven experiments: splits, the full preprocessing pipeline,
frame-count sweeps, and CSV/SVG reporting.

The pipeline for one sample is: decode clip -> uniform frame sampling ->
face ROI crop (sidecar boxes or motion-energy fallback) -> grayscale ->
bilinear resize -> dense flow between consecutive frames -> HSV flow
colorization -> tensor [n-1, 3, size, size]. A sweep retrains the same
seeded model per frame count so only the count varies, then reports
accuracy/precision/recall/F1/AUC per count as CSV plus SVG charts.
"""

from __future__ import annotations

import os
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadLabel,
    DfflowError,
    EmptyDataset,
    EmptyResults,
    InvalidSpec,
    ManifestParseError,
    NotEnoughFrames,
    StageError,
    TooFewSamples,
)
from .face_roi import (
    crop_roi,
    fallback_center_box,
    load_roi_sidecar,
    motion_energy_box,
)
from .media_io import (
    FrameSequence,
    load_frame_dir,
    read_y4m,
    resize_bilinear,
    sample_uniform,
    to_grayscale,
)
from .metrics import confusion, roc_auc, summary, write_roc_csv
from .model import ModelConfig, TrainConfig, build_model, predict_score, train
from .optical_flow import HsSettings, flow_to_rgb, horn_schunck

__all__ = [
    "SampleRecord",
    "SweepResult",
    "AccessAudit",
    "load_manifest",
    "split_dataset",
    "preprocess_frames",
    "run_pipeline",
    "materialize_clips",
    "frame_sweep",
    "emit_report",
    "REFERENCE_NOTE",
]

# Published full-scale benchmark results, shown on charts as context only;
# they need the licensed corpora and pretrained backbones to reproduce.
REFERENCE_NOTE = (
    "published full-scale reference: FF++ 91.21%/0.91 AUC @70f, "
    "Celeb-DF 79.49%/0.79 @90f, DFDC 66.26%/0.66 @30f"
)


@dataclass
class SampleRecord:
    clip_path: Path
    label: int
    roi_path: Path | None = None
    split: str = "unassigned"


@dataclass
class SweepResult:
    frames: int
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    auc: float
    labels: list[int] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)


class AccessAudit:
    """Counts clip materializations by (phase, split) to prove split hygiene."""

    def __init__(self) -> None:
        self.counts: Counter = Counter()
        self.phase = ""
        self._lock = threading.Lock()

    def record(self, rec: SampleRecord) -> None:
        with self._lock:
            self.counts[(self.phase, rec.split)] += 1

    def leaked(self) -> int:
        """Test-split materializations that happened while preparing training data."""
        return sum(n for (phase, split), n in self.counts.items()
                   if phase == "train-prep" and split != "train")


def load_manifest(path: str | os.PathLike) -> list[SampleRecord]:
    """Parse `clip_path,label[,roi_path]` CSV; paths resolve against the manifest dir."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] not in ("clip_path,label", "clip_path,label,roi_path"):
        raise ManifestParseError(f"{path}:1: missing manifest header")
    base = path.parent
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) not in (2, 3) or not parts[0].strip():
            raise ManifestParseError(f"{path}:{lineno}: expected clip_path,label[,roi_path]")
        if parts[1].strip() not in ("0", "1"):
            raise BadLabel(f"{path}:{lineno}: label must be 0 or 1, got {parts[1]!r}")
        clip = Path(parts[0].strip())
        if not clip.is_absolute():
            clip = base / clip
        roi = None
        if len(parts) == 3 and parts[2].strip():
            roi = Path(parts[2].strip())
            if not roi.is_absolute():
                roi = base / roi
        records.append(SampleRecord(clip_path=clip, label=int(parts[1]), roi_path=roi))
    return records


def split_dataset(records: list[SampleRecord], train_frac: float = 0.8, seed: int = 0):
    """Seeded shuffle then prefix split, stratified by label when possible."""
    if len(records) < 2:
        raise TooFewSamples(f"need >= 2 records, got {len(records)}")
    if not 0.0 < train_frac < 1.0:
        raise InvalidSpec(f"train_frac must be in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    by_label = {0: [], 1: []}
    for i, rec in enumerate(records):
        by_label[rec.label].append(i)
    out = [replace(rec) for rec in records]
    stratify = all(len(v) >= 2 for v in by_label.values())
    groups = [by_label[0], by_label[1]] if stratify else [list(range(len(records)))]
    for group in groups:
        order = [group[j] for j in rng.permutation(len(group))]
        n_train = round(train_frac * len(group))
        for pos, idx in enumerate(order):
            out[idx].split = "train" if pos < n_train else "test"
    return out


def _decode_clip(rec: SampleRecord) -> FrameSequence:
    if rec.clip_path.is_dir():
        return load_frame_dir(rec.clip_path)
    return read_y4m(rec.clip_path)


def _crop_stage(rec: SampleRecord, seq: FrameSequence) -> list:
    """Per-frame ROI crops: sidecar boxes when given, else a motion-energy box."""
    if rec.roi_path is not None:
        boxes = {b.frame_index: b for b in load_roi_sidecar(rec.roi_path)}
        crops = []
        for frame, idx in zip(seq.frames, seq.frame_indices):
            box = boxes.get(idx)
            if box is None or not box.present:
                continue  # frames without a usable box are dropped
            crops.append(crop_roi(frame, box))
        if len(crops) < 2:
            raise NotEnoughFrames(f"{rec.clip_path}: fewer than 2 frames with ROI boxes")
        return crops
    gray = FrameSequence(
        frames=[to_grayscale(f) for f in seq.frames],
        frame_indices=list(seq.frame_indices),
        source_id=seq.source_id,
    )
    if len(gray) >= 2:
        box = motion_energy_box(gray, frac=0.5)
    else:
        box = fallback_center_box(seq.frames[0])
    return [crop_roi(f, box) for f in seq.frames]


def _staged(stage, fn):
    try:
        return fn()
    except (DfflowError, OSError) as exc:
        raise StageError(stage, exc) from exc


def preprocess_frames(
    rec: SampleRecord,
    frames_per_video: int,
    size: int = 112,
    audit: AccessAudit | None = None,
) -> list:
    """Image-space stages only: decode, sample, ROI crop, grayscale, resize."""
    if frames_per_video < 2:
        raise StageError("sample", NotEnoughFrames("need at least 2 frames"))
    if audit is not None:
        audit.record(rec)
    seq = _staged("decode", lambda: _decode_clip(rec))
    sampled = _staged("sample", lambda: sample_uniform(seq, frames_per_video))
    crops = _staged("roi", lambda: _crop_stage(rec, sampled))
    gray = _staged("grayscale", lambda: [to_grayscale(f) for f in crops])
    return _staged("resize", lambda: [resize_bilinear(f, size, size) for f in gray])


def run_pipeline(
    rec: SampleRecord,
    frames_per_video: int,
    flow_settings: HsSettings = HsSettings(),
    size: int = 112,
    audit: AccessAudit | None = None,
) -> np.ndarray:
    """Clip tensor [n-1, 3, size, size]; stage failures carry the stage name."""
    small = preprocess_frames(rec, frames_per_video, size, audit)
    flows = _staged(
        "flow",
        lambda: [
            horn_schunck(a, b, flow_settings) for a, b in zip(small, small[1:])
        ],
    )
    images = _staged("colorize", lambda: [flow_to_rgb(f) for f in flows])
    return np.stack([img.data for img in images])


def materialize_clips(
    records,
    frames_per_video: int,
    flow_settings: HsSettings = HsSettings(),
    size: int = 112,
    audit: AccessAudit | None = None,
    threads: int = 1,
) -> list[np.ndarray]:
    """run_pipeline over records, optionally on a thread pool, order preserved."""

    def work(rec):
        return run_pipeline(rec, frames_per_video, flow_settings, size, audit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, records))
    return [work(rec) for rec in records]


def frame_sweep(
    records: list[SampleRecord],
    frame_counts: list[int],
    model_config: ModelConfig,
    train_config: TrainConfig,
    flow_settings: HsSettings = HsSettings(),
    size: int = 112,
    audit: AccessAudit | None = None,
    threads: int = 1,
) -> list[SweepResult]:
    """Retrain per frame count with fixed seeds; evaluate on the test split."""
    if not frame_counts or any(n < 2 for n in frame_counts):
        raise InvalidSpec(f"frame_counts must be non-empty, each >= 2: {frame_counts}")
    train_recs = [r for r in records if r.split == "train"]
    test_recs = [r for r in records if r.split == "test"]
    if not train_recs or not test_recs:
        raise EmptyDataset("records must carry train and test splits")
    audit = audit if audit is not None else AccessAudit()

    results = []
    for n in frame_counts:
        audit.phase = "train-prep"
        train_set = [
            (clip, rec.label)
            for clip, rec in zip(
                materialize_clips(train_recs, n, flow_settings, size, audit, threads), train_recs
            )
        ]
        model = build_model(model_config)
        model, _ = train(model, train_set, train_config)

        audit.phase = "test-eval"
        test_clips = materialize_clips(test_recs, n, flow_settings, size, audit, threads)
        scores = [predict_score(model, clip) for clip in test_clips]
        labels = [rec.label for rec in test_recs]
        preds = [1 if s > 0.5 else 0 for s in scores]
        s = summary(confusion(labels, preds))
        curve = roc_auc(labels, scores)
        results.append(
            SweepResult(
                frames=n,
                accuracy=s.accuracy,
                precision=s.precision,
                recall=s.recall,
                f1=s.f1,
                auc=curve.auc,
                labels=labels,
                scores=scores,
            )
        )
    return results


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def emit_report(results: list[SweepResult], out_dir: str | os.PathLike) -> list[Path]:
    """Write sweep.csv, per-count ROC CSVs, and the two SVG charts."""
    if not results:
        raise EmptyResults("no sweep results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    sweep_csv = out_dir / "sweep.csv"
    with open(sweep_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frames,accuracy,precision,recall,f1,auc\n")
        for r in results:
            fh.write(
                f"{r.frames},{_fmt(r.accuracy)},{_fmt(r.precision)},"
                f"{_fmt(r.recall)},{_fmt(r.f1)},{_fmt(r.auc)}\n"
            )
    written.append(sweep_csv)

    curves = []
    for r in results:
        curve = roc_auc(r.labels, r.scores)
        roc_csv = out_dir / f"roc_{r.frames}.csv"
        write_roc_csv(curve, roc_csv)
        written.append(roc_csv)
        curves.append(curve)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "dfflow"
    plt.rcParams["svg.fonttype"] = "none"

    fig, ax = plt.subplots(figsize=(6, 5))
    for r, curve in zip(results, curves):
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        (line,) = ax.plot(xs, ys, label=f"{r.frames} frames (AUC {curve.auc:.3f})")
        line.set_gid(f"series_frames_{r.frames}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC by frame count")
    ax.legend(loc="lower right", fontsize=8)
    roc_svg = out_dir / "roc.svg"
    fig.savefig(roc_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(roc_svg)

    fig, ax = plt.subplots(figsize=(6, 5))
    metric_series = [
        ("accuracy", [r.accuracy for r in results]),
        ("precision", [r.precision for r in results]),
        ("recall", [r.recall for r in results]),
        ("f1", [r.f1 for r in results]),
        ("auc", [r.auc for r in results]),
    ]
    xs = [r.frames for r in results]
    for name, ys in metric_series:
        clean = [np.nan if v is None else v for v in ys]
        (line,) = ax.plot(xs, clean, marker="o", label=name)
        line.set_gid(f"metric_{name}")
    ax.set_xlabel("frames per clip")
    ax.set_ylabel("score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("metrics vs. frame count")
    ax.legend(loc="lower right", fontsize=8)
    fig.text(0.5, 0.01, REFERENCE_NOTE, ha="center", fontsize=6, color="gray")
    metrics_svg = out_dir / "metrics_vs_frames.svg"
    fig.savefig(metrics_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(metrics_svg)
    return written
