"""
ablation: the full model and each single-component ablation on one experiment
"""
from gwcl.commands.common import add_config_flags, add_train_flags, load_experiment
from gwcl.services.pipeline import ABLATIONS, get_artifact_cache, run_ablation


def register(subparsers):
    parser = subparsers.add_parser("ablation", help="Compare the full model against its ablations")
    add_config_flags(parser)
    parser.add_argument("--cube")
    parser.add_argument("--labels")
    parser.add_argument("--reps", type=int)
    parser.add_argument("--out")
    parser.add_argument("--cache", help="Artifact cache directory")
    parser.add_argument("--settings", default=",".join(ABLATIONS),
                        help=f"Comma-separated subset of {', '.join(ABLATIONS)}")
    add_train_flags(parser)
    parser.set_defaults(func=run)


def run(args):
    spec = load_experiment(args)
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    results = run_ablation(spec, settings, get_artifact_cache(args.cache))

    print(f"\n  {'Setting':<12}{'OA':>16}{'AA':>16}{'kappa':>16}")
    for name, report in results.items():
        cells = [f"{getattr(report, m) * 100:6.2f} ({getattr(report, m + '_std') * 100:5.2f})"
                 for m in ("oa", "aa", "kappa")]
        print(f"  {name:<12}" + "".join(f"{c:>16}" for c in cells))
    print(f"\n[OK] Summary -> {spec.output_dir / 'ablation_summary.kv'}")
    return 0
