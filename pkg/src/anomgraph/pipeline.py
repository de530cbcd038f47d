"""End-to-end orchestration: features in, score maps and reports out.

The stage order is fixed: pool at r=1, build the aggregated distance index,
compute burnout statistics, select suspicious links by coverage, build the
image graph, partition it, flag dense outlier communities, collect the
exclusion set, then rescore every (layer, r) table against the reduced base.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import feature_io, pooling, scoring, burnout, community, filtering, metrics
from .errors import ConfigError, NoEdges
from .feature_io import FeatureSet, GroundTruth
from .filtering import AnomalyScoreMap, ExclusionSet
from .scoring import DistanceIndex


@dataclass
class PipelineConfig:
    features: str = ""
    output_dir: str = "run"
    ground_truth: str | None = None
    k_percent: float = 0.10
    omega_fraction: float = 0.3
    alpha: float = 0.2
    tau_cov: float = 0.95
    gamma_quantile: float = 0.25
    k_iqr: float = 4.5
    theta_percentile: float = 99.0
    r_set: tuple[int, ...] = (1, 3, 5)
    eta: float = 1.0
    chunks: int = 1
    seed: int = 0
    normalize_features: bool = False
    fpr_limit: float = 0.3
    use_cache: bool = True
    write_plots: bool = True

    def validate(self) -> "PipelineConfig":
        for name in ("k_percent", "omega_fraction", "tau_cov",
                     "gamma_quantile", "eta"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {v}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.k_iqr < 0:
            raise ConfigError("k_iqr must be nonnegative")
        if not 0.0 < self.theta_percentile <= 100.0:
            raise ConfigError("theta_percentile must be in (0, 100]")
        if not self.r_set:
            raise ConfigError("r_set may not be empty")
        for r in self.r_set:
            if r < 1 or r % 2 == 0:
                raise ConfigError(f"receptive field sizes must be odd, got {r}")
        if self.chunks < 1:
            raise ConfigError("chunks must be >= 1")
        return self


_BOOL_KEYS = {"normalize_features", "use_cache", "write_plots"}
_INT_KEYS = {"chunks", "seed"}
_STR_KEYS = {"features", "output_dir", "ground_truth"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw or None if key == "ground_truth" else raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean for {key}, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key == "r_set":
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    return float(raw)


def config_from_pairs(pairs: dict[str, str],
                      base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    known = set(asdict(cfg))
    updates = {}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return replace(cfg, **updates).validate()


def load_config(path, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Flat key=value lines; '#' starts a comment; overrides win."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        pairs[key] = raw
    pairs.update(overrides or {})
    return config_from_pairs(pairs)


@dataclass
class RunResult:
    config: PipelineConfig
    baseline: AnomalyScoreMap
    final: AnomalyScoreMap
    exclusions: ExclusionSet
    partition: community.CommunityPartition | None
    graph: community.SimilarityGraph | None
    report: metrics.EvalReport | None
    diagnostics: dict = field(default_factory=dict)


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cache_path(cache_dir: Path, feat_hash: str, r: int, layer: int,
                normalize: bool, eta: float) -> Path:
    tag = f"{feat_hash}:{r}:{layer}:{int(normalize)}:{eta:.6f}"
    return cache_dir / (hashlib.sha256(tag.encode()).hexdigest()[:32] + ".cdgx")


def build_index_tables(fs: FeatureSet, cfg: PipelineConfig,
                       cache_dir: Path | None = None,
                       feat_hash: str | None = None) -> list[DistanceIndex]:
    """One sorted distance table per (r, layer), cached when possible."""
    screening = None
    if cfg.eta < 1.0:
        screening = scoring.build_screening_plan(fs.class_tokens, cfg.eta)
    tables = []
    for r in cfg.r_set:
        agg = pooling.aggregate(fs, r)
        for layer in range(fs.n_layers):
            path = None
            if cache_dir is not None and feat_hash is not None:
                path = _cache_path(cache_dir, feat_hash, r, layer,
                                   cfg.normalize_features, cfg.eta)
                if path.exists():
                    tables.append(scoring.load_index(path))
                    continue
            idx = scoring.build_msr(agg, layer, screening=screening,
                                    normalize=cfg.normalize_features,
                                    chunks=cfg.chunks)
            if path is not None:
                cache_dir.mkdir(parents=True, exist_ok=True)
                scoring.save_index(idx, path)
            tables.append(idx)
    return tables


def _pooled_tokens(fs: FeatureSet, cfg: PipelineConfig) -> dict:
    out = {}
    for r in cfg.r_set:
        agg = pooling.aggregate(fs, r)
        for layer in range(fs.n_layers):
            out[(layer, r)] = scoring._flat(agg, layer, cfg.normalize_features)
    return out


def detect_communities(fs: FeatureSet, cfg: PipelineConfig):
    """Aggregated index -> burnout links -> graph -> flagged communities."""
    screening = None
    if cfg.eta < 1.0:
        screening = scoring.build_screening_plan(fs.class_tokens, cfg.eta)
    agg_index = scoring.build_aggregated_index(
        pooling.aggregate(fs, 1), screening=screening,
        normalize=cfg.normalize_features, chunks=cfg.chunks)
    omega = int(np.ceil(cfg.omega_fraction * fs.n_images))
    pool = burnout.build_link_pool(agg_index, omega, cfg.alpha)
    link_set = burnout.coverage_based_selection(pool, cfg.tau_cov, fs.n_images)
    graph = community.build_graph(link_set, fs.n_images, fs.image_ids)
    gamma = community.select_gamma(graph, cfg.gamma_quantile)
    part = community.leiden_cpm(graph, gamma, seed=cfg.seed)
    part = community.analyze_partition(graph, part, cfg.k_iqr)
    diag = {
        "omega": omega,
        "n_links_selected": link_set.n_selected,
        "lambda_effective": link_set.lambda_effective,
        "coverage_achieved": link_set.coverage_achieved,
        "n_batches": link_set.n_batches,
        "gamma": gamma,
        "n_edges": len(graph.edges),
        "n_communities": len(part.communities),
        "flagged_communities": [list(c) for c in part.flagged()],
    }
    return agg_index, link_set, graph, part, diag


def run(cfg: PipelineConfig, enable_filtering: bool = True) -> RunResult:
    cfg.validate()
    fs = feature_io.load_feature_set(cfg.features)
    gt = feature_io.load_ground_truth(cfg.ground_truth) if cfg.ground_truth else None
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feat_hash = _file_hash(cfg.features)
    cache_dir = out_dir.parent / "cache" if cfg.use_cache else None

    t0 = time.perf_counter()
    tables = build_index_tables(fs, cfg, cache_dir, feat_hash)
    n_candidates = tables[0].sorted_distances.shape[2]
    k = scoring.default_k(n_candidates, cfg.k_percent)
    base_patch = scoring.final_patch_scores(tables, k)
    baseline = AnomalyScoreMap(
        base_patch.reshape(fs.n_images, fs.grid_side, fs.grid_side),
        base_patch.max(axis=1))

    graph = part = None
    exclusions = ExclusionSet()
    diag = {"k": k, "feature_hash": feat_hash}
    if enable_filtering:
        try:
            _, link_set, graph, part, stage_diag = detect_communities(fs, cfg)
            diag.update(stage_diag)
            flagged = part.flagged()
            if flagged:
                exclusions = filtering.targeted_filtering(
                    flagged, tables, k, cfg.theta_percentile)
        except NoEdges:
            warnings.warn("similarity graph has no edges; filtering skipped")
            diag["filtering_skipped"] = "no edges"

    final = filtering.rescore_with_exclusions(
        tables, exclusions, k, _pooled_tokens(fs, cfg), fs.grid_side)
    diag["runtime_s"] = time.perf_counter() - t0
    diag["n_excluded_patches"] = len(exclusions.members)

    report = None
    if gt is not None:
        report = metrics.evaluate(final.patch_scores, final.image_scores,
                                  gt.patch_labels, gt.image_labels,
                                  cfg.fpr_limit)
        cap = metrics.capture_and_exclusion(
            exclusions.members,
            gt.patch_labels.reshape(fs.n_images, -1),
            base_patch)
        report.capture_rate = cap["capture_rate"]
        report.excluded_rate = cap["excluded_rate"]
        report.excluded_split = cap["excluded_split"]
        diag["capture"] = cap

    result = RunResult(cfg, baseline, final, exclusions, part, graph,
                       report, diag)
    write_artifacts(result, fs, out_dir)
    return result


def run_baseline(cfg: PipelineConfig) -> RunResult:
    """Mutual scoring only; no graph, no filtering."""
    return run(cfg, enable_filtering=False)


def _graph_payload(result: RunResult) -> dict:
    graph, part = result.graph, result.partition
    payload: dict = {"n_nodes": 0, "edges": []}
    if graph is not None:
        payload["n_nodes"] = graph.n_nodes
        payload["edges"] = [[i, j, w] for (i, j), w in sorted(graph.edges.items())]
        if graph.image_ids:
            payload["image_ids"] = list(graph.image_ids)
    if part is not None:
        payload["communities"] = [list(c) for c in part.communities]
        payload["densities"] = part.densities
        payload["outlier_flags"] = part.outlier_flags
        payload["gamma"] = part.gamma
    return payload


def write_artifacts(result: RunResult, fs: FeatureSet, out_dir: Path) -> None:
    cfg = result.config
    feature_io.write_score_maps(result.final.patch_scores, fs.image_ids,
                                out_dir / "scores.cdgs")
    feature_io.write_score_maps(result.baseline.patch_scores, fs.image_ids,
                                out_dir / "baseline_scores.cdgs")
    with open(out_dir / "image_scores.csv", "w") as fh:
        fh.write("image_id,baseline_score,final_score\n")
        for iid, b, f in zip(fs.image_ids, result.baseline.image_scores,
                             result.final.image_scores):
            fh.write(f"{iid},{b!r},{f!r}\n")
    (out_dir / "exclusions.json").write_text(
        json.dumps(result.exclusions.to_dict(), indent=2))
    (out_dir / "graph.json").write_text(
        json.dumps(_graph_payload(result), indent=2))
    if result.report is not None:
        (out_dir / "report.json").write_text(
            json.dumps(result.report.to_dict(), indent=2))
    manifest = {
        "config": asdict(cfg),
        "diagnostics": {key: val for key, val in result.diagnostics.items()
                        if key != "capture"},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, default=float))
    if cfg.write_plots:
        from . import plots
        plots.render_run_figures(result, fs, out_dir)
