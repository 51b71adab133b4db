"""
train: two-stage training on prepared features and graph
"""
from pathlib import Path

from gwcl.commands.common import add_config_flags, add_train_flags, load_train_config
from gwcl.services.features import FeatureMatrix
from gwcl.services.graph_service import SparseGraph
from gwcl.services.hsi_data import load_labels, make_split, write_split
from gwcl.services.trainer import TrainState, train


def register(subparsers):
    parser = subparsers.add_parser("train", help="Stage 1 + stage 2 training")
    parser.add_argument("--features", required=True, help="Feature matrix stem")
    parser.add_argument("--graph", help="Graph stem (not needed with --skip-stage2)")
    parser.add_argument("--labels", required=True, help="Ground-truth stem")
    parser.add_argument("--remap-labels", action="store_true")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--resume", help="Checkpoint directory to continue from")
    add_config_flags(parser)
    add_train_flags(parser)
    parser.set_defaults(func=run)


def run(args):
    config = load_train_config(args)
    features = FeatureMatrix.load(args.features)
    graph = SparseGraph.load(args.graph) if args.graph and not config.skip_stage2 else None
    labels = load_labels(args.labels, remap=args.remap_labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    split = make_split(labels, config.quota, config.fallback, config.seed)
    write_split(out / "split.txt", split, labels.index())
    (out / "config.txt").write_text("\n".join(config.to_lines()) + "\n", encoding="utf-8")

    state = None
    if args.resume:
        state = TrainState.load(args.resume)
        print(f"[RESUME] stage={state.stage} epoch={state.epoch} step={state.step}")
    state = train(features, graph, split, config, labels.n_classes, state=state,
                  log_path=out / "train_log.csv", checkpoint_dir=out / "checkpoint")

    if state.history:
        last = state.history[-1]
        print(f"[OK] {state.step} steps, final epoch loss {last['total']:.6f}")
    print(f"[OK] Checkpoint -> {out / 'checkpoint'}")
    return 0
