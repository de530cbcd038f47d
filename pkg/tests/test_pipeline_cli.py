"""Configuration handling, pipeline orchestration, and the CLI surface."""

import json

import numpy as np
import pytest

from anomgraph import cli, feature_io, pipeline, synth
from anomgraph.errors import ConfigError


def small_synth(tmp_path, seed=0, q=3):
    cfg = synth.SynthConfig(n_images=12, n_layers=2, grid_side=6,
                            n_channels=16, n_consistent_images=q,
                            plant_patch_count=4, n_inconsistent_images=0,
                            texture_group_size=3, seed=seed)
    fs, gt, man = synth.generate(cfg)
    fpath = tmp_path / "features.cdgf"
    gpath = tmp_path / "labels.cdgt"
    feature_io.write_feature_set(fs, fpath)
    feature_io.write_ground_truth(gt, gpath)
    return fpath, gpath, man


def test_config_validation():
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(features="x", k_percent=0.0).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(features="x", alpha=1.0).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(features="x", r_set=(2,)).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(features="x", chunks=0).validate()
    pipeline.PipelineConfig(features="x").validate()


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("""
# comment line
features = a.cdgf
output_dir = out    # trailing comment
r_set = 1, 3
k_iqr = 3.0
use_cache = no
seed = 7
""")
    cfg = pipeline.load_config(path)
    assert cfg.features == "a.cdgf"
    assert cfg.output_dir == "out"
    assert cfg.r_set == (1, 3)
    assert cfg.k_iqr == 3.0
    assert cfg.use_cache is False
    assert cfg.seed == 7


def test_config_overrides_win(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("features = a.cdgf\nseed = 1\n")
    cfg = pipeline.load_config(path, {"seed": "9"})
    assert cfg.seed == 9


def test_config_rejects_unknown_keys_and_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.config_from_pairs({"no_such_key": "1"})
    with pytest.raises(ConfigError):
        pipeline.config_from_pairs({"seed": "abc"})
    with pytest.raises(ConfigError):
        pipeline.config_from_pairs({"use_cache": "maybe"})
    path = tmp_path / "bad.conf"
    path.write_text("features a.cdgf\n")
    with pytest.raises(ConfigError):
        pipeline.load_config(path)


def test_run_writes_artifacts(tmp_path):
    fpath, gpath, man = small_synth(tmp_path)
    out = tmp_path / "out"
    cfg = pipeline.PipelineConfig(features=str(fpath), output_dir=str(out),
                                  ground_truth=str(gpath), r_set=(1, 3),
                                  write_plots=False)
    res = pipeline.run(cfg)
    for name in ("scores.cdgs", "baseline_scores.cdgs", "image_scores.csv",
                 "exclusions.json", "graph.json", "report.json",
                 "manifest.json"):
        assert (out / name).exists(), name
    scores, ids = feature_io.load_score_maps(out / "scores.cdgs")
    assert scores.shape == (12, 6, 6)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["features"] == str(fpath)
    csv_lines = (out / "image_scores.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 13   # header + one row per image


def test_run_plots(tmp_path):
    fpath, gpath, _ = small_synth(tmp_path)
    out = tmp_path / "out"
    cfg = pipeline.PipelineConfig(features=str(fpath), output_dir=str(out),
                                  ground_truth=str(gpath), r_set=(1,),
                                  write_plots=True)
    pipeline.run(cfg)
    pngs = list(out.glob("*.png"))
    assert pngs, "report rendering produced no figures"


def test_cache_reuse_is_bitwise(tmp_path):
    fpath, _, _ = small_synth(tmp_path)
    cfg = pipeline.PipelineConfig(features=str(fpath),
                                  output_dir=str(tmp_path / "a"),
                                  r_set=(1, 3), write_plots=False)
    res1 = pipeline.run(cfg)
    cfg2 = pipeline.PipelineConfig(features=str(fpath),
                                   output_dir=str(tmp_path / "b"),
                                   r_set=(1, 3), write_plots=False)
    res2 = pipeline.run(cfg2)   # hits the index cache from the first run
    assert (res1.final.patch_scores.tobytes()
            == res2.final.patch_scores.tobytes())


def test_baseline_skips_filtering(tmp_path):
    fpath, _, _ = small_synth(tmp_path)
    cfg = pipeline.PipelineConfig(features=str(fpath),
                                  output_dir=str(tmp_path / "base"),
                                  r_set=(1,), write_plots=False)
    res = pipeline.run_baseline(cfg)
    assert res.exclusions is None or not res.exclusions.members
    assert res.partition is None


def test_cli_synth_run_eval(tmp_path, capsys):
    data = tmp_path / "data"
    rc = cli.main(["synth", "--output-dir", str(data), "--n-images", "12",
                   "--grid-side", "6", "--n-channels", "16",
                   "--n-consistent", "3", "--plant-patches", "4",
                   "--n-inconsistent", "0", "--seed", "0"])
    assert rc == 0
    assert (data / "features.cdgf").exists()
    out = tmp_path / "run"
    rc = cli.main(["run", "--features", str(data / "features.cdgf"),
                   "--ground-truth", str(data / "labels.cdgt"),
                   "--output-dir", str(out), "--r-set", "1,3",
                   "--write-plots", "no"])
    assert rc == 0
    summary = capsys.readouterr().out
    assert "auroc_cls" in summary
    rc = cli.main(["eval", "--scores", str(out / "scores.cdgs"),
                   "--ground-truth", str(data / "labels.cdgt"),
                   "--output", str(tmp_path / "report.json")])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report) >= {"auroc_cls", "pro_seg"}


def test_cli_graph_dump(tmp_path):
    data = tmp_path / "data"
    cli.main(["synth", "--output-dir", str(data), "--n-images", "12",
              "--grid-side", "6", "--n-channels", "16",
              "--n-consistent", "3", "--plant-patches", "4",
              "--n-inconsistent", "0", "--seed", "0"])
    out = tmp_path / "graph"
    rc = cli.main(["graph-dump", "--features", str(data / "features.cdgf"),
                   "--output-dir", str(out)])
    assert rc == 0
    payload = json.loads((out / "graph.json").read_text())
    assert payload["n_nodes"] == 12
    assert (out / "graph.png").exists()


def test_cli_evt_suite(tmp_path):
    out = tmp_path / "evt"
    rc = cli.main(["evt", "--suite", "coupon", "--output-dir", str(out),
                   "--m", "10", "--trials", "200"])
    assert rc == 0
    assert list(out.glob("*.csv")) or list(out.glob("*.json"))


def test_cli_exit_codes(tmp_path):
    # unknown config key -> configuration error
    assert cli.main(["run", "--features", "x.cdgf", "--k-percent", "2.0",
                     "--output-dir", str(tmp_path / "o")]) == 2
    # missing input file -> data error
    assert cli.main(["run", "--features", str(tmp_path / "missing.cdgf"),
                     "--output-dir", str(tmp_path / "o")]) == 3


def test_cli_rejects_garbage_file(tmp_path):
    bad = tmp_path / "bad.cdgf"
    bad.write_bytes(b"not a feature file at all")
    assert cli.main(["run", "--features", str(bad),
                     "--output-dir", str(tmp_path / "o")]) == 3
