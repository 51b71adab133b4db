"""
evaluate: predict every pixel with a checkpoint and score the test pixels
"""
from pathlib import Path

from gwcl.services import raw_store
from gwcl.services.features import FeatureMatrix
from gwcl.services.hsi_data import DEFAULT_FALLBACK, DEFAULT_QUOTA, load_labels, make_split, read_split
from gwcl.services.metrics import evaluate, write_kv
from gwcl.services.pipeline import predict_all
from gwcl.services.trainer import TrainState


def register(subparsers):
    parser = subparsers.add_parser("evaluate", help="OA / AA / kappa of a trained checkpoint")
    parser.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    parser.add_argument("--features", required=True, help="Feature matrix stem")
    parser.add_argument("--labels", required=True, help="Ground-truth stem")
    parser.add_argument("--remap-labels", action="store_true")
    split_source = parser.add_mutually_exclusive_group(required=True)
    split_source.add_argument("--seed", type=int, help="Re-draw the split of this seed")
    split_source.add_argument("--split", help="Split file written by train / ingest")
    parser.add_argument("--quota", type=int, default=DEFAULT_QUOTA)
    parser.add_argument("--fallback", type=int, default=DEFAULT_FALLBACK)
    parser.add_argument("--no-spatial", action="store_true", help="Checkpoint was trained on h' only")
    parser.add_argument("--batch-size", type=int, default=4096)
    parser.add_argument("--out", help="Output directory (defaults to the checkpoint directory)")
    parser.set_defaults(func=run)


def run(args):
    state = TrainState.load(args.checkpoint)
    features = FeatureMatrix.load(args.features)
    labels = load_labels(args.labels, remap=args.remap_labels)
    if args.split:
        split = read_split(args.split)
    else:
        split = make_split(labels, args.quota, args.fallback, args.seed)

    predictions = predict_all(state, features, args.batch_size, spatial=not args.no_spatial)
    report = evaluate(predictions[split.test], split.test_classes, labels.n_classes)

    out = Path(args.out or args.checkpoint)
    raw_store.write_array(out / "predictions", predictions)
    write_kv(out / "metrics.kv", report.to_kv())
    text = report.to_text()
    (out / "metrics.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0
