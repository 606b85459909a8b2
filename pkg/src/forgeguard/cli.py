"""Command-line pipeline: prep -> split -> train -> eval -> curves, plus the
inference service (serve) and one-shot classification (detect).

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from forgeguard.cascade import (
    TemplateMatchBackend,
    detect_faces,
    load_stage_weights,
    remote_detect,
)
from forgeguard.cascade.remote import RemoteServiceConfig
from forgeguard.dataset import (
    CLASS_LABELS,
    DatasetManifest,
    FrameExtractionConfig,
    ManifestEntry,
    catalog_names,
    extract_frames,
    harvest_faces,
    load_image,
    preprocess_frame,
    read_manifest,
    save_png,
    stratified_split,
    write_manifest,
)
from forgeguard.evaluation import confusion, render_report, report, write_report
from forgeguard.model_zoo import build_classifier, load_checkpoint
from forgeguard.service import NO_FACE_MESSAGE, create_app, handle_detect
from forgeguard.training import (
    TrainConfig,
    emit_curves,
    evaluate_split,
    read_history,
    train,
    write_history,
)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif"}
VIDEO_SUFFIXES = {".avi", ".mp4", ".mov", ".mkv"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats3(text: str) -> tuple[float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated values")
    return tuple(parts)


def _ints3(text: str) -> tuple[int, int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated integers")
    return tuple(parts)


def _build_local_detector(args):
    if getattr(args, "stage_weights", None):
        weights_dir = Path(args.stage_weights)
        backends = [
            load_stage_weights(weights_dir / f"{role}.fgsw", expected_role=role)
            for role in ("proposal", "refine", "output")
        ]
    else:
        backends = [TemplateMatchBackend(role) for role in ("proposal", "refine", "output")]
    thresholds = args.thresholds
    nms_thresholds = args.nms

    def detector(image):
        return detect_faces(image, backends, thresholds=thresholds, nms_thresholds=nms_thresholds)

    return detector


def _build_remote_detector(args):
    if not args.endpoint:
        raise UsageError("--detector remote requires --endpoint")
    config = RemoteServiceConfig(endpoint=args.endpoint, api_key=args.api_key or "")

    def detector(image):
        import io

        import numpy as np
        from PIL import Image

        arr = np.clip(image.pixels, 0, 255).astype("uint8")
        buf = io.BytesIO()
        Image.fromarray(arr if arr.shape[2] == 3 else arr[:, :, 0]).save(buf, format="PNG")
        return remote_detect(buf.getvalue(), "PNG", config)

    return detector


def _make_detector(args):
    if args.detector == "remote":
        return _build_remote_detector(args)
    return _build_local_detector(args)


def _add_detector_flags(sub):
    sub.add_argument("--detector", choices=("local", "remote"), default="local")
    sub.add_argument("--stage-weights", help="directory with proposal/refine/output .fgsw files")
    sub.add_argument("--thresholds", type=_floats3, default=(0.6, 0.7, 0.95),
                     help="stage score thresholds, e.g. 0.6,0.7,0.95")
    sub.add_argument("--nms", type=_floats3, default=(0.7, 0.7, 0.7),
                     help="per-stage NMS overlap thresholds")
    sub.add_argument("--endpoint", help="remote face service URL")
    sub.add_argument("--api-key", help="remote face service API key")


# ---------------------------------------------------------------------------
# commands


def cmd_prep(args) -> int:
    if not args.videos and not args.images:
        raise UsageError("prep needs --videos and/or --images")
    for flag, value in (("--videos", args.videos), ("--images", args.images)):
        if value and not Path(value).is_dir():
            raise UsageError(f"{flag} {value} is not a directory")
    out_dir = Path(args.out) / args.label
    manifest_path = Path(args.manifest)
    detector = _make_detector(args)
    config = FrameExtractionConfig(every_nth=args.every_nth, max_frames=args.max_frames)

    frames = []  # (source_tag, frame_name, ImageBuffer)
    if args.videos:
        for video in sorted(Path(args.videos).iterdir()):
            if video.suffix.lower() not in VIDEO_SUFFIXES:
                continue
            for idx, frame in enumerate(extract_frames(video, config)):
                frames.append((video.name, f"{video.stem}_t{idx:04d}", frame))
    if args.images:
        for path in sorted(Path(args.images).iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            frames.append((path.name, path.stem, load_image(path)))

    entries = (
        read_manifest(manifest_path, allow_unsplit=True).entries
        if manifest_path.exists()
        else []
    )
    manifest_dir = manifest_path.parent.resolve()
    crops_written = 0
    for source, base, frame in frames:
        crops = harvest_faces(preprocess_frame(frame), detector)
        for crop_img, (name, face_index) in zip(crops, catalog_names(base, len(crops))):
            crop_path = out_dir / name
            save_png(crop_img, crop_path)
            rel = crop_path.resolve().relative_to(manifest_dir)
            entries.append(
                ManifestEntry(
                    path=str(rel),
                    label=args.label,
                    source=source,
                    face_index=face_index,
                )
            )
            crops_written += 1
    write_manifest(DatasetManifest(entries=entries), manifest_path)
    print(f"processed {len(frames)} frames, wrote {crops_written} crops to {out_dir}")
    if crops_written == 0:
        print("warning: no faces found in any input", file=sys.stderr)
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest, allow_unsplit=True)
    meta = {e.path: e for e in manifest.entries}
    items = [(e.path, e.label) for e in manifest.entries]
    split_manifest = stratified_split(items, ratios=args.ratios, seed=args.seed)
    enriched = [
        ManifestEntry(
            path=e.path,
            label=e.label,
            split=e.split,
            source=meta[e.path].source,
            face_index=meta[e.path].face_index,
        )
        for e in split_manifest.entries
    ]
    write_manifest(DatasetManifest(entries=enriched, seed=args.seed), args.manifest)
    counts = DatasetManifest(entries=enriched).class_counts()
    for (label, split), count in sorted(counts.items()):
        print(f"{label:>8} {split:>11} {count:>7}")
    return 0


def cmd_train(args) -> int:
    manifest = read_manifest(args.manifest)
    root = Path(args.root) if args.root else Path(args.manifest).parent
    model = build_classifier(args.variant, args.classes, dropout_rate=args.dropout)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        patience=args.patience,
        min_delta=args.min_delta,
        seed=args.seed,
    )
    history, ckpt = train(model, manifest, config, root=root, checkpoint_path=args.out)
    if args.history:
        write_history(history, args.history)
    last = history.records[-1]
    print(
        f"trained {len(history.records)} epochs"
        f"{' (early stop)' if history.stopped_early else ''}; "
        f"best epoch {history.best_epoch}; "
        f"final val_loss {last.val_loss:.4f} val_acc {last.val_acc:.4f}"
    )
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    manifest = read_manifest(args.manifest)
    model = load_checkpoint(args.checkpoint)
    root = Path(args.root) if args.root else Path(args.manifest).parent
    loss, accuracy, predictions = evaluate_split(model, manifest, args.split, root=root)
    matrix = confusion([(t, p) for t, p, _ in predictions], model.class_names)
    rep = report(matrix)
    print(render_report(rep))
    print(f"\nloss {loss:.4f}  accuracy {accuracy:.4f}  ({args.split} split)")
    if args.report:
        write_report(rep, args.report)
        print(f"report: {args.report}")
    return 0


def cmd_curves(args) -> int:
    history = read_history(args.history)
    out = emit_curves(history, args.out)
    print(f"curves: {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    model = load_checkpoint(args.model)
    detector = _make_detector(args)
    app = create_app(model, detector, log_path=args.log, webapp_dir=args.webapp_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_detect(args) -> int:
    model = load_checkpoint(args.model)
    detector = _make_detector(args)
    payload = Path(args.image).read_bytes()
    declared = Path(args.image).suffix.lstrip(".")
    response = handle_detect(payload, declared, model, detector)
    if not response["face_found"]:
        print(NO_FACE_MESSAGE)
        return 0
    print(f"verdict: {response['verdict']}")
    for name, p in response["probabilities"].items():
        print(f"  {name:>8}: {p:.4f}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> Parser:
    parser = Parser(prog="forgeguard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="harvest face crops from videos and images")
    p.add_argument("--videos", help="directory of input videos")
    p.add_argument("--images", help="directory of input images")
    p.add_argument("--label", required=True, choices=CLASS_LABELS)
    p.add_argument("--out", required=True, help="crop output directory")
    p.add_argument("--manifest", required=True, help="manifest file to append to")
    p.add_argument("--every-nth", type=int, default=10, help="frame sampling stride")
    p.add_argument("--max-frames", type=int, default=None, help="cap frames per video")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("split", help="assign train/validation/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ints3, default=(7, 2, 1))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a classifier head on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=("efficientnet_b4", "resnet50", "vgg16"))
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--min-delta", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--root", help="base directory for manifest paths")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="write the epoch CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--root", help="base directory for manifest paths")
    p.add_argument("--report", help="write the report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="plot loss/accuracy curves from a history CSV")
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log", help="detection log path")
    p.add_argument("--webapp-dir", help="static UI bundle to serve at /")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("detect", help="classify a single image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True, help="checkpoint path")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_detect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
