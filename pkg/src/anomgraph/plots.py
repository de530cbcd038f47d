"""Figure rendering for run reports and the statistics lab.

Everything draws to files through the Agg backend; no interactive windows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def score_map_grid(patch_scores: np.ndarray, image_ids, path,
                   max_images: int = 8, title: str = "anomaly score maps") -> None:
    """Heatmaps of the highest-scoring images, shared color scale."""
    n = patch_scores.shape[0]
    peak = patch_scores.reshape(n, -1).max(axis=1)
    pick = np.argsort(-peak)[:min(max_images, n)]
    cols = min(4, pick.size)
    rows = int(np.ceil(pick.size / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows),
                             squeeze=False)
    vmax = patch_scores[pick].max()
    for ax in axes.flat:
        ax.set_axis_off()
    for ax, idx in zip(axes.flat, pick):
        im = ax.imshow(patch_scores[idx], vmin=0.0, vmax=vmax, cmap="inferno")
        ax.set_title(str(image_ids[idx]), fontsize=8)
        ax.set_axis_on()
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(title)
    fig.colorbar(im, ax=axes, shrink=0.8)
    _save(fig, Path(path))


def image_score_scatter(baseline: np.ndarray, final: np.ndarray, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    lim = max(baseline.max(), final.max()) * 1.05
    ax.plot([0, lim], [0, lim], color="0.7", lw=1, ls="--")
    ax.scatter(baseline, final, s=18, alpha=0.8)
    ax.set_xlabel("baseline image score")
    ax.set_ylabel("filtered image score")
    ax.set_title("image scores before vs after filtering")
    _save(fig, Path(path))


def graph_layout(graph, partition, path, seed: int = 0) -> None:
    """Spring-ish layout: Fruchterman-Reingold on the weight matrix."""
    n = graph.n_nodes
    w = graph.weight_matrix()
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(n, 2))
    k = 1.0 / np.sqrt(n)
    for step in range(120):
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(delta, axis=-1)
        np.fill_diagonal(dist, 1.0)
        rep = k * k / dist**2
        att = (w / w.max() if w.max() > 0 else w) * dist / k
        force = ((rep - att)[:, :, None] * delta / dist[:, :, None]).sum(axis=1)
        step_size = 0.1 * (1.0 - step / 120)
        norms = np.maximum(np.linalg.norm(force, axis=1, keepdims=True), 1e-9)
        pos += step_size * force / norms
    fig, ax = plt.subplots(figsize=(6, 6))
    for (i, j), weight in graph.edges.items():
        ax.plot(pos[[i, j], 0], pos[[i, j], 1], color="0.8",
                lw=0.3 + 2.0 * weight / max(1.0, max(graph.edges.values())),
                zorder=1)
    colors = np.zeros(n, dtype=int)
    flagged = np.zeros(n, dtype=bool)
    if partition is not None:
        for cid, members in enumerate(partition.communities):
            for node in members:
                colors[node] = cid
                flagged[node] = partition.outlier_flags[cid]
    ax.scatter(pos[:, 0], pos[:, 1], c=colors, cmap="tab20", s=60, zorder=2,
               edgecolors=np.where(flagged, "red", "none"), linewidths=1.5)
    ax.set_title("image similarity graph (red ring = flagged community)")
    ax.set_axis_off()
    _save(fig, Path(path))


def density_fences(densities, k_iqr: float, flags, path) -> None:
    vals = np.array([d for d in densities if d is not None], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    if vals.size:
        q1, q3 = np.percentile(vals, [25, 75])
        fence = q3 + k_iqr * (q3 - q1)
        ax.axhline(fence, color="red", ls="--", lw=1,
                   label=f"upper fence (k={k_iqr})")
        x = np.arange(vals.size)
        flagged_vals = np.array([f for d, f in zip(densities, flags)
                                 if d is not None])
        ax.bar(x, vals, color=np.where(flagged_vals, "firebrick", "steelblue"))
        ax.legend()
    ax.set_xlabel("community")
    ax.set_ylabel("internal density")
    ax.set_title("community densities and outlier fence")
    _save(fig, Path(path))


def hill_plot(k_values, estimates, plateau, path,
              reference: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(k_values, estimates, lw=1.2, label="Hill estimate")
    ax.axhline(plateau, color="green", lw=1, label=f"plateau {plateau:.3f}")
    if reference is not None:
        ax.axhline(reference, color="red", ls="--", lw=1,
                   label=f"reference {reference:.3f}")
    ax.set_xlabel("order statistics used (k)")
    ax.set_ylabel("tail index estimate")
    ax.set_title("Hill plot")
    ax.legend()
    _save(fig, Path(path))


def qq_plot(theoretical, empirical, path, degenerate: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(theoretical, empirical, s=6, alpha=0.5)
    lim = [0, max(np.max(theoretical), np.max(empirical)) * 1.05]
    ax.plot(lim, lim, color="red", lw=1)
    ax.set_xlabel("theoretical quantile")
    ax.set_ylabel("empirical quantile")
    title = "minimum-distance Q-Q plot"
    if degenerate:
        title += " (degenerate tail)"
    ax.set_title(title)
    _save(fig, Path(path))


def spacing_moments(orders, mean_obs, var_obs, alpha, path) -> None:
    orders = np.asarray(orders, dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.loglog(orders, mean_obs, "o", label="observed mean")
    ax1.loglog(orders, 1.0 / (alpha * orders), "-", label="1/(alpha i)")
    ax1.set_xlabel("order i")
    ax1.set_ylabel("mean log-spacing")
    ax1.legend()
    ax2.loglog(orders, var_obs, "o", label="observed variance")
    ax2.loglog(orders, 1.0 / (alpha * orders)**2, "-", label="1/(alpha i)^2")
    ax2.set_xlabel("order i")
    ax2.set_ylabel("variance")
    ax2.legend()
    fig.suptitle("log-spacing moments vs exponential prediction")
    _save(fig, Path(path))


def growth_curve_plot(records, path) -> None:
    """records: dicts with 'class', 'neighbor_index', 'mean', 'std'."""
    colors = {"normal": "steelblue", "consistent_anomaly": "firebrick",
              "inconsistent_anomaly": "darkorange", "anomalous": "firebrick",
              "all": "steelblue"}
    by_class: dict[str, list] = {}
    for rec in records:
        by_class.setdefault(rec["class"], []).append(rec)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, recs in by_class.items():
        recs = sorted(recs, key=lambda r: r["neighbor_index"])
        x = np.array([r["neighbor_index"] for r in recs])
        mean = np.array([r["mean"] for r in recs])
        std = np.array([r["std"] for r in recs])
        color = colors.get(name, "gray")
        ax.plot(x, mean, color=color, label=name)
        ax.fill_between(x, mean - std, mean + std, color=color, alpha=0.2)
    ax.set_xlabel("neighbor index i")
    ax.set_ylabel("growth rate ln(d_(i+1)/d_(i))")
    ax.set_title("minimum-distance growth rates by patch class")
    ax.legend()
    _save(fig, Path(path))


def coupon_plot(estimate, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    names = ["classical", "mixed approx", "asymptotic", "Monte-Carlo"]
    vals = [estimate.exact_classical, estimate.approx_mixed,
            estimate.approx_asymptotic, estimate.mc_mean]
    bars = ax.bar(names, vals, color=["0.6", "0.6", "0.6", "steelblue"])
    ax.errorbar([3], [estimate.mc_mean], yerr=[3 * estimate.mc_se],
                fmt="none", color="black", capsize=4)
    ax.bar_label(bars, fmt="%.1f")
    ax.set_ylabel("expected turns")
    ax.set_title(f"coupon collector, m={estimate.m}, p={estimate.p_two}")
    _save(fig, Path(path))


def render_run_figures(result, fs, out_dir) -> None:
    out_dir = Path(out_dir)
    score_map_grid(result.final.patch_scores, fs.image_ids,
                   out_dir / "score_maps.png")
    image_score_scatter(result.baseline.image_scores,
                        result.final.image_scores,
                        out_dir / "image_scores.png")
    if result.graph is not None and result.graph.edges:
        graph_layout(result.graph, result.partition, out_dir / "graph.png",
                     seed=result.config.seed)
    if result.partition is not None:
        density_fences(result.partition.densities, result.config.k_iqr,
                       result.partition.outlier_flags,
                       out_dir / "densities.png")
