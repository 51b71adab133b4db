"""
run-experiment: every repetition of a configured experiment, end to end
"""
from gwcl.commands.common import add_config_flags, add_train_flags, load_experiment
from gwcl.services.pipeline import get_artifact_cache, run_pipeline


def register(subparsers):
    parser = subparsers.add_parser("run-experiment", help="Repeated end-to-end runs with aggregate metrics")
    add_config_flags(parser)
    parser.add_argument("--cube", help="Override the config's cube stem")
    parser.add_argument("--labels", help="Override the config's ground-truth stem")
    parser.add_argument("--reps", type=int, help="Repetitions")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--cache", help="Artifact cache directory")
    add_train_flags(parser)
    parser.set_defaults(func=run)


def run(args):
    spec = load_experiment(args)
    summary = run_pipeline(spec, get_artifact_cache(args.cache))
    print(summary.to_text(spec.class_names))
    print(f"\n[OK] {summary.runs}/{spec.repetitions} runs -> {spec.output_dir}")
    return 0
