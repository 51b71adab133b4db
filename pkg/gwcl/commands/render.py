"""
render-map: class map PNG from saved predictions (or the ground truth),
optionally with a pseudocolor composite of the cube
"""
from gwcl.errors import ConfigError
from gwcl.services import raw_store
from gwcl.services.hsi_data import load_cube, load_labels
from gwcl.services.rendering import ClassMap, default_palette, parse_palette, render_map, render_pseudocolor


def register(subparsers):
    parser = subparsers.add_parser("render-map", help="Render a class map PNG")
    parser.add_argument("--labels", required=True, help="Ground-truth stem (fixes the pixel layout)")
    parser.add_argument("--predictions", help="Predictions stem; the ground truth is drawn when omitted")
    parser.add_argument("--remap-labels", action="store_true")
    parser.add_argument("--palette", help="'#rrggbb,...' with background first")
    parser.add_argument("--out", required=True, help="Output PNG")
    parser.add_argument("--pseudocolor", help="Also write a pseudocolor PNG of --cube here")
    parser.add_argument("--cube", help="Cube stem for --pseudocolor")
    parser.add_argument("--bands", default="", help="Three 0-based band indices, e.g. 50,27,17")
    parser.set_defaults(func=run)


def run(args):
    labels = load_labels(args.labels, remap=args.remap_labels)
    palette = parse_palette(args.palette) if args.palette else default_palette()
    index = labels.index()
    if args.predictions:
        predictions, _ = raw_store.read_array(args.predictions)
        class_map = ClassMap.from_predictions(predictions.astype("int64"), index, palette, labels.n_classes)
    else:
        class_map = ClassMap(codes=labels.codes, palette=palette, n_classes=labels.n_classes)
    print(f"[OK] {render_map(class_map, args.out)}")

    if args.pseudocolor:
        if not args.cube:
            raise ConfigError("--pseudocolor needs --cube")
        bands = [int(b) for b in args.bands.split(",") if b.strip()]
        print(f"[OK] {render_pseudocolor(load_cube(args.cube), bands, args.pseudocolor)}")
    return 0
