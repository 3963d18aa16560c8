import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from roibackdoor import desk
from roibackdoor.cli import main
from roibackdoor.imagecore import read_image, write_image
from roibackdoor.roicodec import decode, encode


@pytest.fixture
def png(tmp_path):
    p = tmp_path / "in.png"
    write_image(p, desk.fixture_images(1)[0])
    return p


def write_config(path, **over):
    doc = {"dataset": "desk:60:2", "output": str(path.parent / "out"), "route": "caa", "poison_rate": 0.1, "mask": "checker:8x8"}
    doc.update(over)
    path.write_text(yaml.safe_dump(doc))
    return path


def test_encode_uniform_matches_plain(png, tmp_path, capsys):
    assert main(["encode", str(png), str(tmp_path / "u.jpg"), "--quality", "75", "--mask", "uniform:1"]) == 0
    assert (tmp_path / "u.jpg").read_bytes() == encode(read_image(png), 75).data
    out = capsys.readouterr().out
    assert "bytes=" in out and "bpp=" in out


def test_encode_checker_is_size_neutral(png, tmp_path):
    assert main(["encode", str(png), str(tmp_path / "c.jpg"), "--mask", "checker:8x8"]) == 0
    c = (tmp_path / "c.jpg").read_bytes()
    assert decode(c).shape == (64, 64, 3)
    assert abs(len(c) - len(encode(read_image(png), 75).data)) <= 0.05 * len(c)


def test_missing_input(tmp_path, capsys):
    assert main(["encode", str(tmp_path / "nope.png"), str(tmp_path / "o.jpg")]) == 2
    assert "input not found" in capsys.readouterr().err


def test_decode_and_mask(png, tmp_path):
    main(["encode", str(png), str(tmp_path / "a.jpg")])
    assert main(["decode", str(tmp_path / "a.jpg"), str(tmp_path / "a.png")]) == 0
    assert main(["mask", "concentric:4", str(tmp_path / "m.pgm"), "--size", "32x48"]) == 0
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n48 32\n255\n")
    assert main(["mask", "freq:0.25", str(tmp_path / "f.pgm"), "--image", str(png)]) == 0
    assert main(["mask", "residual", str(tmp_path / "r.pgm")]) == 2


def test_poison_requires_seed(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    with pytest.raises(SystemExit) as e:
        main(["poison", str(cfg)])
    assert e.value.code == 2


def test_poison_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["poison", str(cfg), "--seed", "4"]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("route=caa N=60 poisoned=6 mean_bpp=")
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert len(first) == 62
    assert main(["poison", str(cfg), "--seed", "4", "--workers", "2"]) == 0
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}


def test_poison_config_errors(tmp_path, capsys):
    assert main(["poison", str(write_config(tmp_path / "a.yaml", bogus=1)), "--seed", "1"]) == 2
    assert "unknown keys: bogus" in capsys.readouterr().err
    assert main(["poison", str(write_config(tmp_path / "b.yaml", route="reactivation", mask="freq:0.25", poison_rate=0)), "--seed", "1"]) == 2
    assert "empty poisoned pool" in capsys.readouterr().err
    assert main(["poison", str(write_config(tmp_path / "c.yaml", dataset=str(tmp_path / "missing"))), "--seed", "1"]) == 2
    assert main(["poison", str(write_config(tmp_path / "d.yaml", codec={"quality": 75, "colour": 1})), "--seed", "1"]) == 2


def test_analyze(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", dataset="desk:80:3", poison_rate=0.25)
    main(["poison", str(cfg), "--seed", "2"])
    capsys.readouterr()
    out = tmp_path / "out"
    assert main(["analyze", str(out), "--metrics", "psnr,ssim", "--detector", "--recompress", "50,75,90"]) == 0
    text = capsys.readouterr().out
    for key in ("psnr_vs_compressed", "ssim_vs_compressed", "psnr_vs_original", "auc=", "recompress_auc[q50]", "recompress_auc[q90]"):
        assert key in text
    summary = json.loads((out / "summary.json").read_text())
    assert 0 <= summary["auc"] <= 1
    assert len(summary["recompress_auc"]) == 3
    assert (out / "per_sample.csv").read_text().count("\n") == 81


def test_console_script(png, tmp_path):
    r = subprocess.run([sys.executable, "-m", "roibackdoor.cli", "encode", str(png), str(tmp_path / "x.jpg")], capture_output=True, text=True)
    assert r.returncode == 0 and "bpp=" in r.stdout
    assert np.array_equal(decode((tmp_path / "x.jpg").read_bytes()).shape, (64, 64, 3))
