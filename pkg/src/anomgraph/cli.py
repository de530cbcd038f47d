"""Command-line entry point.

Verbs: run, baseline, synth, evt, eval, graph-dump.  Exit codes: 0 on
success, 2 for configuration problems, 3 for data problems, 4 for internal
invariant violations.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evtlab, feature_io, metrics, pipeline, plots, synth
from .errors import AnomgraphError, ConfigError, DataError, InternalInvariantError


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--features", help="input feature file (.cdgf)")
    parser.add_argument("--ground-truth", dest="ground_truth",
                        help="optional label file (.cdgt)")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--k-percent", dest="k_percent")
    parser.add_argument("--omega-fraction", dest="omega_fraction")
    parser.add_argument("--alpha")
    parser.add_argument("--tau-cov", dest="tau_cov")
    parser.add_argument("--gamma-quantile", dest="gamma_quantile")
    parser.add_argument("--k-iqr", dest="k_iqr")
    parser.add_argument("--theta-percentile", dest="theta_percentile")
    parser.add_argument("--r-set", dest="r_set", help="odd sizes, e.g. '1,3,5'")
    parser.add_argument("--eta")
    parser.add_argument("--chunks")
    parser.add_argument("--seed")
    parser.add_argument("--normalize-features", dest="normalize_features")
    parser.add_argument("--use-cache", dest="use_cache")
    parser.add_argument("--write-plots", dest="write_plots")


_CONFIG_KEYS = ("features", "ground_truth", "output_dir", "k_percent",
                "omega_fraction", "alpha", "tau_cov", "gamma_quantile",
                "k_iqr", "theta_percentile", "r_set", "eta", "chunks",
                "seed", "normalize_features", "use_cache", "write_plots")


def _build_config(args) -> pipeline.PipelineConfig:
    overrides = {k: str(getattr(args, k)) for k in _CONFIG_KEYS
                 if getattr(args, k, None) is not None}
    if args.config:
        cfg = pipeline.load_config(args.config, overrides)
    else:
        cfg = pipeline.config_from_pairs(overrides)
    if not cfg.features:
        raise ConfigError("a feature file is required (--features or config)")
    return cfg


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    result = pipeline.run(cfg)
    _print_run_summary(result)
    return 0


def _cmd_baseline(args) -> int:
    cfg = _build_config(args)
    result = pipeline.run_baseline(cfg)
    _print_run_summary(result)
    return 0


def _print_run_summary(result) -> None:
    d = result.diagnostics
    print(f"output: {result.config.output_dir}")
    print(f"k={d['k']} excluded_patches={d['n_excluded_patches']} "
          f"runtime={d['runtime_s']:.2f}s")
    if "flagged_communities" in d:
        print(f"communities={d['n_communities']} "
              f"flagged={d['flagged_communities']}")
    if result.report is not None:
        r = result.report
        print(f"auroc_cls={r.auroc_cls:.4f} auroc_seg={r.auroc_seg:.4f} "
              f"pro_seg={r.pro_seg:.4f}")


def _cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        n_images=args.n_images, n_layers=args.n_layers,
        grid_side=args.grid_side, n_channels=args.n_channels,
        n_consistent_images=args.n_consistent,
        plant_patch_count=args.plant_patches,
        plant_cluster_spread=args.spread,
        normal_tail_alpha=args.tail_alpha,
        n_inconsistent_images=args.n_inconsistent,
        seed=args.seed)
    fs, gt, manifest = synth.generate(cfg)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    feature_io.write_feature_set(fs, out / "features.cdgf")
    feature_io.write_ground_truth(gt, out / "labels.cdgt")
    (out / "plant_manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2))
    print(f"wrote {out / 'features.cdgf'} "
          f"(N={fs.n_images}, L={fs.n_layers}, grid={fs.grid_side})")
    return 0


def _cmd_eval(args) -> int:
    scores, ids = feature_io.load_score_maps(args.scores)
    gt = feature_io.load_ground_truth(args.ground_truth)
    image_scores = scores.reshape(scores.shape[0], -1).max(axis=1)
    report = metrics.evaluate(scores, image_scores, gt.patch_labels,
                              gt.image_labels, args.fpr_limit)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.output:
        Path(args.output).write_text(payload)
    print(payload)
    return 0


def _cmd_graph_dump(args) -> int:
    cfg = _build_config(args)
    fs = feature_io.load_feature_set(cfg.features)
    _, link_set, graph, part, diag = pipeline.detect_communities(fs, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "n_nodes": graph.n_nodes,
        "edges": [[i, j, w] for (i, j), w in sorted(graph.edges.items())],
        "communities": [list(c) for c in part.communities],
        "densities": part.densities,
        "outlier_flags": part.outlier_flags,
        "links": link_set.to_records()[:args.max_links],
        "diagnostics": diag,
    }
    (out / "graph.json").write_text(json.dumps(payload, indent=2, default=float))
    plots.graph_layout(graph, part, out / "graph.png", seed=cfg.seed)
    plots.density_fences(part.densities, cfg.k_iqr, part.outlier_flags,
                         out / "densities.png")
    print(f"graph: {graph.n_nodes} nodes, {len(graph.edges)} edges, "
          f"{len(part.communities)} communities; wrote {out / 'graph.json'}")
    return 0


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _cmd_evt(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    suites = ("spacings", "hill", "coupon", "qq") if args.suite == "all" \
        else (args.suite,)
    for suite in suites:
        if suite == "spacings":
            sim = evtlab.simulate_log_spacings(
                args.alpha, args.omega, args.trials, seed=args.seed,
                ks_indices=(1, 5, 20, 50))
            orders = np.arange(1, args.omega)
            _write_csv(out / "spacings.csv",
                       "order,mean,variance,predicted_mean,predicted_variance",
                       [(int(i), float(sim.means[i - 1]),
                         float(sim.variances[i - 1]),
                         1.0 / (args.alpha * i), 1.0 / (args.alpha * i) ** 2)
                        for i in orders])
            plots.spacing_moments(orders, sim.means, sim.variances,
                                  args.alpha, out / "spacings.png")
            print("spacings: KS " + ", ".join(
                f"i={i}: {v:.4f}" for i, v in sim.ks_by_index.items()))
        elif suite == "hill":
            rng = evtlab._rng(args.seed, stream=1)
            samples = (1.0 - rng.random(args.trials)) ** (-1.0 / args.alpha)
            ks = np.unique(np.linspace(50, args.trials // 2, 200).astype(int))
            est = evtlab.hill_curve(samples, ks)
            _write_csv(out / "hill.csv", "k,alpha_hat",
                       [(int(k), float(a))
                        for k, a in zip(est.k_values, est.alpha_hats)])
            plots.hill_plot(est.k_values, est.alpha_hats,
                            est.plateau_value or float("nan"),
                            out / "hill.png", reference=args.alpha)
            print(f"hill: plateau {est.plateau_value} over {est.plateau_range}")
        elif suite == "coupon":
            est = evtlab.coupon_collector_expected_turns(
                args.m, args.p_two, trials=args.trials, seed=args.seed)
            _write_csv(out / "coupon.csv",
                       "m,p_two,classical,mixed,asymptotic,mc_mean,mc_se",
                       [(est.m, est.p_two, est.exact_classical,
                         est.approx_mixed, est.approx_asymptotic,
                         est.mc_mean, est.mc_se)])
            plots.coupon_plot(est, out / "coupon.png")
            print(f"coupon: classical {est.exact_classical:.1f}, "
                  f"mixed {est.approx_mixed:.1f}, "
                  f"mc {est.mc_mean:.1f} +- {est.mc_se:.2f}")
        elif suite == "qq":
            rng = evtlab._rng(args.seed, stream=2)
            samples = evtlab.sample_beta_power(args.alpha, args.trials, rng)
            pairs, degenerate = evtlab.qq_pairs(samples, args.alpha)
            _write_csv(out / "qq.csv", "empirical,theoretical",
                       [(float(a), float(b)) for a, b in pairs])
            plots.qq_plot(pairs[:, 1], pairs[:, 0], out / "qq.png",
                          degenerate=degenerate)
            print(f"qq: {args.trials} samples, degenerate={degenerate}")
        else:
            raise ConfigError(f"unknown evt suite {suite!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomgraph",
        description="zero-shot anomaly detection with neighbor-burnout "
                    "community filtering")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline with filtering")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", help="mutual scoring only")
    _add_config_flags(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_synth = sub.add_parser("synth", help="generate a synthetic feature set")
    p_synth.add_argument("--output-dir", required=True)
    p_synth.add_argument("--n-images", type=int, default=50)
    p_synth.add_argument("--n-layers", type=int, default=2)
    p_synth.add_argument("--grid-side", type=int, default=14)
    p_synth.add_argument("--n-channels", type=int, default=64)
    p_synth.add_argument("--n-consistent", type=int, default=10)
    p_synth.add_argument("--n-inconsistent", type=int, default=3)
    p_synth.add_argument("--plant-patches", type=int, default=10)
    p_synth.add_argument("--spread", type=float, default=0.02)
    p_synth.add_argument("--tail-alpha", type=float, default=3.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=_cmd_synth)

    p_eval = sub.add_parser("eval", help="metrics on existing score maps")
    p_eval.add_argument("--scores", required=True, help=".cdgs score maps")
    p_eval.add_argument("--ground-truth", required=True, help=".cdgt labels")
    p_eval.add_argument("--fpr-limit", type=float, default=0.3)
    p_eval.add_argument("--output", help="write the report JSON here too")
    p_eval.set_defaults(func=_cmd_eval)

    p_graph = sub.add_parser("graph-dump",
                             help="build and dump the similarity graph")
    _add_config_flags(p_graph)
    p_graph.add_argument("--max-links", type=int, default=1000)
    p_graph.set_defaults(func=_cmd_graph_dump)

    p_evt = sub.add_parser("evt", help="tail-statistics lab suites")
    p_evt.add_argument("--suite", default="all",
                       choices=["all", "spacings", "hill", "coupon", "qq"])
    p_evt.add_argument("--output-dir", required=True)
    p_evt.add_argument("--alpha", type=float, default=3.0)
    p_evt.add_argument("--omega", type=int, default=200)
    p_evt.add_argument("--trials", type=int, default=20000)
    p_evt.add_argument("--m", type=int, default=100)
    p_evt.add_argument("--p-two", dest="p_two", type=float, default=0.5)
    p_evt.add_argument("--seed", type=int, default=0)
    p_evt.set_defaults(func=_cmd_evt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (InternalInvariantError, AnomgraphError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
