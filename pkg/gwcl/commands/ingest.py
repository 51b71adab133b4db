"""
ingest: convert / validate a cube and its ground truth, report class
populations and the labeled/test counts a split would draw
"""
from gwcl.services.hsi_data import (
    DEFAULT_FALLBACK,
    DEFAULT_QUOTA,
    convert_mat,
    load_cube,
    load_labels,
    make_split,
    train_count,
    write_split,
)


def register(subparsers):
    parser = subparsers.add_parser("ingest", help="Validate (or convert) a cube + ground truth")
    parser.add_argument("--cube", required=True, help="Cube stem (<name>.raw + <name>.hdr.txt)")
    parser.add_argument("--labels", required=True, help="Ground-truth stem")
    parser.add_argument("--from-mat", help="Convert this .mat cube into --cube first")
    parser.add_argument("--labels-mat", help="Convert this .mat ground truth into --labels first")
    parser.add_argument("--key", help="Variable name inside --from-mat")
    parser.add_argument("--labels-key", help="Variable name inside --labels-mat")
    parser.add_argument("--remap-labels", action="store_true", help="Remap sparse class codes to 1..c")
    parser.add_argument("--quota", type=int, default=DEFAULT_QUOTA)
    parser.add_argument("--fallback", type=int, default=DEFAULT_FALLBACK)
    parser.add_argument("--seed", type=int, help="Also draw a split and export it")
    parser.add_argument("--split-out", default="split.txt", help="Split export path (with --seed)")
    parser.set_defaults(func=run)


def run(args):
    if args.from_mat:
        print(f"[CONVERT] {args.from_mat} -> {convert_mat(args.from_mat, args.cube, 'cube', args.key)}")
    if args.labels_mat:
        print(f"[CONVERT] {args.labels_mat} -> {convert_mat(args.labels_mat, args.labels, 'labels', args.labels_key)}")

    cube = load_cube(args.cube)
    labels = load_labels(args.labels, cube, remap=args.remap_labels)
    index = labels.index()
    print(f"\n[CUBE] {cube.height} x {cube.width} x {cube.bands}")
    print(f"[LABELS] {labels.n_classes} classes, {len(index)} non-background pixels")
    if labels.mapping:
        print(f"[REMAP] {labels.mapping}")

    print(f"\n  {'Code':<6}{'Pixels':>8}{'Train':>8}{'Test':>8}")
    total_train = 0
    for code, population in labels.class_populations().items():
        n_train = train_count(population, args.quota, args.fallback)
        total_train += n_train
        print(f"  {code:<6}{population:>8}{n_train:>8}{population - n_train:>8}")
    print(f"  {'total':<6}{len(index):>8}{total_train:>8}{len(index) - total_train:>8}")

    if args.seed is not None:
        split = make_split(labels, args.quota, args.fallback, args.seed)
        path = write_split(args.split_out, split, index)
        print(f"\n[SPLIT] seed={args.seed}: {split.labeled.size} labeled, {split.test.size} test -> {path}")
    return 0
