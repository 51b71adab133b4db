"""
build-graph: K-NN similarity graph from a feature matrix, with statistics
"""
from gwcl.config import BLOCK_SIZE, KNN_BACKEND, THREADS
from gwcl.services.features import FeatureMatrix
from gwcl.services.graph_service import (
    BACKENDS,
    SYMMETRIZE_MODES,
    MetricSpec,
    build_similarity,
    graph_stats,
)


def register(subparsers):
    parser = subparsers.add_parser("build-graph", help="Build the pixel similarity graph")
    parser.add_argument("--features", required=True, help="Feature matrix stem")
    parser.add_argument("--sigma-m", type=float, default=0.04)
    parser.add_argument("--sigma-n", type=float, default=0.001)
    parser.add_argument("-K", "--k", type=int, default=10, dest="k")
    parser.add_argument("--symmetrize", choices=SYMMETRIZE_MODES, default="union")
    parser.add_argument("--knn-backend", choices=BACKENDS, default=KNN_BACKEND)
    parser.add_argument("--threads", type=int, default=THREADS)
    parser.add_argument("--block-size", type=int, default=BLOCK_SIZE)
    parser.add_argument("--out", required=True, help="Graph stem")
    parser.set_defaults(func=run)


def run(args):
    features = FeatureMatrix.load(args.features)
    metric = MetricSpec(beta=features.beta, sigma_m=args.sigma_m, sigma_n=args.sigma_n)
    graph = build_similarity(features, metric, args.k, args.symmetrize, args.knn_backend,
                             args.threads, args.block_size)
    graph.save(args.out)

    stats = graph_stats(graph)
    print(f"[OK] {stats['nodes']} nodes, nnz={stats['nnz']} -> {args.out}")
    print("[DEGREES] " + ", ".join(f"{d}:{c}" for d, c in stats["degree_histogram"].items()))
    print("[WEIGHTS] " + ", ".join(f"q{int(q * 100)}={w:.4e}" for q, w in stats["weight_quantiles"].items()))
    return 0
