"""
Pipeline Service
End-to-end reproduction: ingest -> reduce -> graph -> train -> evaluate ->
render, repeated over seeds, with seed-independent artifacts (PCA model,
features, graph) cached on disk and reused across repetitions.
"""
import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from gwcl.config import CACHE_DIR, OUTPUT_DIR, progress_disabled, read_key_values, resolve_data_path
from gwcl.errors import ConfigError, GwclError, MetricUndefinedError
from gwcl.services import raw_store
from gwcl.services.features import FeatureMatrix, PcaModel, assemble_features, fit_reduce
from gwcl.services.graph_service import MetricSpec, SparseGraph, build_similarity
from gwcl.services.hsi_data import HsiCube, LabelRaster, load_cube, load_labels, make_split
from gwcl.services.metrics import MetricReport, aggregate, evaluate, write_kv
from gwcl.services.net import predict_proba
from gwcl.services.rendering import ClassMap, default_palette, parse_palette, render_map
from gwcl.services.trainer import TrainConfig, TrainState, train

logger = logging.getLogger("gwcl.pipeline")

# Keys of an experiment file that are not TrainConfig fields
EXPERIMENT_KEYS = ("name", "cube", "labels", "reps", "out", "palette", "class_names",
                   "remap_labels", "base_seed", "pseudocolor_bands")

ABLATIONS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no_stage1": {"skip_stage1": True},
    "no_stage2": {"skip_stage2": True},
    "no_gwcl": {"disable_gwcl": True},
    "no_ce": {"disable_ce": True},
    "no_spatial": {"no_spatial_input": True},
}


@dataclass
class ExperimentSpec:
    """Dataset paths, training config, repetitions, output directory and base seed"""

    cube_path: Path
    labels_path: Path
    config: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 10
    output_dir: Path = OUTPUT_DIR
    base_seed: int = 0
    name: str = "experiment"
    palette: List[Tuple[int, int, int]] = field(default_factory=default_palette)
    class_names: List[str] = field(default_factory=list)
    remap_labels: bool = False
    pseudocolor_bands: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")

    def seed_for(self, repetition: int) -> int:
        return self.base_seed + repetition

    @classmethod
    def from_mapping(cls, values: Dict[str, str], base: Optional[TrainConfig] = None) -> "ExperimentSpec":
        values = dict(values)
        exp = {k: values.pop(k) for k in EXPERIMENT_KEYS if k in values}
        if "cube" not in exp or "labels" not in exp:
            raise ConfigError("Experiment config needs 'cube' and 'labels'")
        config = TrainConfig.from_mapping(values, base)
        try:
            return cls(
                cube_path=resolve_data_path(exp["cube"]),
                labels_path=resolve_data_path(exp["labels"]),
                config=config,
                repetitions=int(exp.get("reps", 10)),
                output_dir=Path(exp.get("out") or OUTPUT_DIR),
                base_seed=int(exp.get("base_seed", config.seed)),
                name=exp.get("name", "experiment"),
                palette=parse_palette(exp["palette"]) if exp.get("palette") else default_palette(),
                class_names=[s.strip() for s in exp.get("class_names", "").split(",") if s.strip()],
                remap_labels=exp.get("remap_labels", "false").lower() in ("1", "true", "yes"),
                pseudocolor_bands=tuple(int(b) for b in exp.get("pseudocolor_bands", "").split(",") if b.strip()),
            )
        except ValueError as e:
            if isinstance(e, GwclError):
                raise
            raise ConfigError(f"Invalid experiment value: {e}") from e

    @classmethod
    def from_file(cls, path: str | Path, base: Optional[TrainConfig] = None) -> "ExperimentSpec":
        return cls.from_mapping(read_key_values(Path(path)), base)


@dataclass
class Dataset:
    cube: HsiCube
    labels: LabelRaster

    @property
    def n_classes(self) -> int:
        return self.labels.n_classes


def load_dataset(spec: ExperimentSpec) -> Dataset:
    cube = load_cube(spec.cube_path)
    labels = load_labels(spec.labels_path, cube, remap=spec.remap_labels)
    return Dataset(cube=cube, labels=labels)


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    for part in (raw_store.header_path(path), raw_store.raw_path(path)):
        with open(part, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


class ArtifactCache:
    """Disk cache for the seed-independent artifacts, keyed by input content and parameters"""

    def __init__(self, directory: Path = CACHE_DIR):
        self.directory = Path(directory)

    def _key(self, *parts: object) -> str:
        return hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).hexdigest()[:16]

    def features_key(self, spec: ExperimentSpec) -> str:
        return self._key("features", _file_digest(spec.cube_path), _file_digest(spec.labels_path),
                         spec.remap_labels, spec.config.beta, spec.config.normalize_spectral)

    def graph_key(self, spec: ExperimentSpec) -> str:
        c = spec.config
        return self._key("graph", self.features_key(spec), repr(c.sigma_m), repr(c.sigma_n), c.k, c.symmetrize)

    def get_features(self, spec: ExperimentSpec, dataset: Dataset) -> FeatureMatrix:
        stem = self.directory / self.features_key(spec) / "features"
        if raw_store.header_path(stem).exists():
            logger.info(f"Using cached features {stem.parent.name}")
            return FeatureMatrix.load(stem)
        index = dataset.labels.index()
        model = fit_reduce(dataset.cube, index, spec.config.beta)
        features = assemble_features(dataset.cube, model, index, spec.config.normalize_spectral)
        model.save(stem.parent / "pca")
        features.save(stem)
        return features

    def get_graph(self, spec: ExperimentSpec, features: FeatureMatrix) -> SparseGraph:
        stem = self.directory / self.graph_key(spec) / "graph"
        if raw_store.header_path(stem).exists():
            logger.info(f"Using cached graph {stem.parent.name}")
            return SparseGraph.load(stem)
        c = spec.config
        metric = MetricSpec(beta=features.beta, sigma_m=c.sigma_m, sigma_n=c.sigma_n)
        graph = build_similarity(features, metric, c.k, c.symmetrize, c.knn_backend, c.threads)
        graph.save(stem)
        return graph


_artifact_caches: Dict[Path, ArtifactCache] = {}


def get_artifact_cache(directory: Optional[Path] = None) -> ArtifactCache:
    """Get or create the cache for a directory"""
    directory = Path(directory or CACHE_DIR)
    if directory not in _artifact_caches:
        _artifact_caches[directory] = ArtifactCache(directory)
    return _artifact_caches[directory]


def predict_all(state: TrainState, features: FeatureMatrix, batch_size: int = 4096,
                spatial: bool = True) -> np.ndarray:
    """
    Class code (1..c) of every non-background pixel, argmax of z computed in
    batches; ties go to the smallest class index
    """
    z = predict_proba(state.params, features.classifier_inputs(spatial), batch_size)
    return np.argmax(z, axis=1).astype(np.int64) + 1


def run_repetition(spec: ExperimentSpec, dataset: Dataset, features: FeatureMatrix,
                   graph: Optional[SparseGraph], repetition: int,
                   resume: Optional[TrainState] = None) -> Tuple[MetricReport, ClassMap]:
    """One seed: split, two-stage training, prediction, metrics, class map"""
    seed = spec.seed_for(repetition)
    config = dataclasses.replace(spec.config, seed=seed)
    out = Path(spec.output_dir)
    logger.info(f"Repetition {repetition}: seed={seed}")

    split = make_split(dataset.labels, config.quota, config.fallback, seed)
    checkpoint_dir = out / "checkpoints" / f"run{repetition}" if config.checkpoint_every else None
    state = train(features, graph, split, config, dataset.n_classes, state=resume,
                  log_path=out / f"train_log_run{repetition}.csv", checkpoint_dir=checkpoint_dir)

    predictions = predict_all(state, features, config.predict_batch, spatial=not config.no_spatial_input)
    report = evaluate(predictions[split.test], split.test_classes, dataset.n_classes)
    report.extra.update({"status": "ok", "seed": str(seed)})
    write_kv(out / f"metrics_run{repetition}.kv", report.to_kv())

    class_map = ClassMap.from_predictions(predictions, dataset.labels.index(), spec.palette,
                                         dataset.n_classes)
    render_map(class_map, out / f"map_run{repetition}.png")
    logger.info(f"Repetition {repetition}: OA={report.oa:.4f} AA={report.aa:.4f} kappa={report.kappa:.4f}")
    return report, class_map


def run_pipeline(spec: ExperimentSpec, cache: Optional[ArtifactCache] = None) -> MetricReport:
    """
    All repetitions of an experiment; a failing repetition is recorded in its
    metrics file and the remaining ones still run

    Returns:
        Aggregated report over the successful repetitions
    """
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = cache or get_artifact_cache()
    dataset = load_dataset(spec)
    features = cache.get_features(spec, dataset)
    graph = None if spec.config.skip_stage2 else cache.get_graph(spec, features)
    (out / "config.txt").write_text("\n".join(spec.config.to_lines()) + "\n", encoding="utf-8")

    reports: List[MetricReport] = []
    for r in tqdm(range(spec.repetitions), desc=spec.name, unit="run", disable=progress_disabled()):
        try:
            report, _ = run_repetition(spec, dataset, features, graph, r)
            reports.append(report)
        except Exception as e:
            logger.error(f"Repetition {r} failed: {e}")
            write_kv(out / f"metrics_run{r}.kv", {"status": "failed", "seed": str(spec.seed_for(r)),
                                                  "error": str(e).replace("\n", " ")})

    if not reports:
        raise MetricUndefinedError(f"All {spec.repetitions} repetitions failed")
    summary = aggregate(reports)
    summary.extra.update({"name": spec.name, "failed": str(spec.repetitions - len(reports))})
    write_kv(out / "metrics_aggregate.kv", summary.to_kv())
    (out / "metrics_aggregate.txt").write_text(summary.to_text(spec.class_names) + "\n", encoding="utf-8")
    logger.info(f"{spec.name}: OA={summary.oa:.4f} ({summary.oa_std:.4f}) over {summary.runs} runs")
    return summary


def run_ablation(spec: ExperimentSpec, settings: Sequence[str] = tuple(ABLATIONS),
                 cache: Optional[ArtifactCache] = None) -> Dict[str, MetricReport]:
    """Run the full model and each single-component ablation; one sub-directory per setting"""
    results: Dict[str, MetricReport] = {}
    summary: Dict[str, str] = {}
    for name in settings:
        if name not in ABLATIONS:
            raise ConfigError(f"Unknown ablation '{name}' (expected one of {list(ABLATIONS)})")
        sub = dataclasses.replace(
            spec,
            config=dataclasses.replace(spec.config, **ABLATIONS[name]),
            output_dir=Path(spec.output_dir) / name,
            name=f"{spec.name}:{name}",
        )
        report = run_pipeline(sub, cache)
        results[name] = report
        for metric in ("oa", "aa", "kappa"):
            summary[f"{name}_{metric}"] = f"{getattr(report, metric):.6f}"
            summary[f"{name}_{metric}_std"] = f"{getattr(report, metric + '_std'):.6f}"
    write_kv(Path(spec.output_dir) / "ablation_summary.kv", summary)
    return results
