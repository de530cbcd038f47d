import numpy as np

from vitexport import read_features
from vitexport.cli import main


def test_extract_command(toy_dataset, tmp_path, capsys):
    out = tmp_path / "widget.cdgf"
    code = main(["extract", "--dataset", str(toy_dataset),
                 "--class-name", "widget", "--backbone", "random-tiny-8",
                 "--resize", "32", "--layers", "2,4", "--output", str(out)])
    assert code == 0
    assert "wrote" in capsys.readouterr().out
    pt, ct, ids = read_features(out)
    assert pt.shape == (3, 2, 4, 4, 32) and len(ids) == 3
    assert np.isfinite(pt).all()


def test_synca_command(toy_dataset, capsys):
    src = toy_dataset / "widget" / "test" / "scratch" / "000.png"
    code = main(["synca", "--dataset", str(toy_dataset),
                 "--class-name", "widget", "--source", str(src),
                 "--fraction", "1.0"])
    assert code == 0
    assert "3 duplicates" in capsys.readouterr().out
    assert (toy_dataset / "widget" / "test" / "synca" / "000.png").is_file()


def test_config_error_exit_code(toy_dataset, tmp_path, capsys):
    code = main(["extract", "--dataset", str(toy_dataset),
                 "--class-name", "widget", "--backbone", "random-tiny-8",
                 "--resize", "30", "--layers", "2", "--output",
                 str(tmp_path / "x.cdgf")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_unknown_backbone_exit_code(toy_dataset, tmp_path, capsys):
    code = main(["extract", "--dataset", str(toy_dataset),
                 "--class-name", "widget", "--backbone", "nope",
                 "--resize", "32", "--output", str(tmp_path / "x.cdgf")])
    assert code == 2


def test_data_error_exit_code(toy_dataset, capsys):
    src = toy_dataset / "widget" / "test" / "good" / "000.png"
    code = main(["synca", "--dataset", str(toy_dataset),
                 "--class-name", "widget", "--source", str(src)])
    assert code == 3
