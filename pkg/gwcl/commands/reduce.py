"""
reduce: fit the spectral reducer and write the fused feature matrix
"""
from pathlib import Path

from gwcl.services.features import assemble_features, fit_reduce
from gwcl.services.hsi_data import load_cube, load_labels


def register(subparsers):
    parser = subparsers.add_parser("reduce", help="PCA to beta components + coordinate fusion")
    parser.add_argument("--cube", required=True)
    parser.add_argument("--labels", required=True)
    parser.add_argument("--beta", type=int, default=20)
    parser.add_argument("--remap-labels", action="store_true")
    parser.add_argument("--no-normalize-spectral", action="store_true",
                        help="Keep raw PCA scores instead of min-max normalizing them")
    parser.add_argument("--out", required=True, help="Output directory (pca_* and features)")
    parser.set_defaults(func=run)


def run(args):
    cube = load_cube(args.cube)
    labels = load_labels(args.labels, cube, remap=args.remap_labels)
    index = labels.index()
    model = fit_reduce(cube, index, args.beta)
    features = assemble_features(cube, model, index, normalize_spectral=not args.no_normalize_spectral)

    out = Path(args.out)
    model.save(out / "pca")
    features.save(out / "features")
    print(f"[OK] {features.n_pixels} x {features.dim} features -> {out / 'features'}")
    print("[VARIANCE] " + " ".join(f"{v:.4f}" for v in model.explained_variance))
    return 0
