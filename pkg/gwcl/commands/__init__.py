"""
CLI subcommands for GWCL
"""


def register_commands(subparsers):
    """Register all subcommands with the argument parser"""
    from gwcl.commands import ablation, build_graph, evaluate, ingest, reduce, render, run_experiment, train

    ingest.register(subparsers)
    reduce.register(subparsers)
    build_graph.register(subparsers)
    train.register(subparsers)
    evaluate.register(subparsers)
    render.register(subparsers)
    run_experiment.register(subparsers)
    ablation.register(subparsers)
