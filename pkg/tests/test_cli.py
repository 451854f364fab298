import filecmp
import struct

import numpy as np
import pytest

from scatid import formats
from scatid.channel import simulate_echoes
from scatid.cli import main
from scatid.gabor import random_weights
from scatid.grid import Cover, ScatteringFunction, build_grid

from conftest import random_instance

CONFIG = """\
J=3
T=1.0
n_t=2
n_g=2
n_a=3
n_b=2
cells=0:0,1:1,2:0
synth=random
L=64
trials=4
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG)
    return path


def run(*args):
    return main([str(a) for a in args])


def outputs(d):
    return sorted(p.name for p in d.iterdir() if p.name != "scatid.log")


def test_scattering_csv_round_trip(tmp_path, rng):
    sf = random_instance(rng, 5, n_t=3, n_g=2)
    path = tmp_path / "c.csv"
    formats.write_scattering_csv(path, sf)
    back = formats.read_scattering_csv(path, sf.grid, sf.cover)
    assert np.array_equal(back.values, sf.values)
    header, first = path.read_text().splitlines()[:2]
    assert header == "a,b,s,q,value"
    digits = first.split(",")[-1].split("e")[0].replace(".", "").lstrip("-0")
    assert len(digits) >= 12


def test_weights_csv_bit_faithful(tmp_path):
    w = random_weights(7, 123)
    formats.write_weights_csv(tmp_path / "w.csv", w)
    assert np.array_equal(formats.read_weights_csv(tmp_path / "w.csv").c, w.c)


def test_mask_and_cover_round_trip(tmp_path):
    mask = np.array([[1, 0, 1], [0, 1, 0]], bool)
    formats.write_mask(tmp_path / "m.txt", mask)
    assert (tmp_path / "m.txt").read_text() == "101\n010\n"
    assert np.array_equal(formats.read_mask(tmp_path / "m.txt"), mask)
    cover = Cover(((0, 2), (1, 1), (0, 0)), occupied=2)
    formats.write_cover_csv(tmp_path / "c.csv", cover)
    assert formats.read_cover_csv(tmp_path / "c.csv") == cover
    (tmp_path / "bad.txt").write_text("10\n1\n")
    with pytest.raises(ValueError):
        formats.read_mask(tmp_path / "bad.txt")


def test_echo_file_round_trip_and_header(tmp_path, rng):
    sf = random_instance(rng, 3, n_t=2, n_g=2)
    ens = simulate_echoes(sf, random_weights(3, 1), 5, 2)
    path = tmp_path / "e.bin"
    formats.write_echoes(path, ens)
    data = path.read_bytes()
    assert data[:4] == b"SCID"
    assert struct.unpack("<IIIII", data[4:24]) == (1, 3, sf.grid.n_t, sf.grid.n_g, 5)
    assert len(data) == 24 + 5 * sf.grid.n_total * 16
    back = formats.read_echoes(path, sf.grid)
    assert np.array_equal(back.y, ens.y)
    other = build_grid(3, 1.0, 1, 2, 1, 3)
    with pytest.raises(ValueError, match="does not match"):
        formats.read_echoes(path, other)


def test_full_pipeline(tmp_path, config):
    out = tmp_path / "run"
    assert run("gen", "--config", config, "--seed", 5, "--out", out) == 0
    assert run("sound", "--config", config, "--out", out) == 0
    assert run("identify", "--config", config, "--out", out, "--mode", "oracle") == 0
    assert run("identify", "--config", config, "--out", out, "--mode", "estimate") == 0
    assert run("analyze", "--config", config, "--out", out, "--threads", 2) == 0
    oracle = formats.read_manifest(out / "identify_oracle.txt")
    assert float(oracle["max_relative_error"]) <= 1e-9
    for key in ("seed", "J", "T", "n_t", "n_g", "L", "cond"):
        assert key in oracle
    est = formats.read_manifest(out / "identify_estimate.txt")
    assert est["L"] == "64"
    report = formats.read_manifest(out / "mc_report.txt")
    assert report["bound_norm"] == "spectral" and float(report["bound"]) > 0
    assert (out / "mc_points.csv").read_text().startswith("j,s,q,bias,variance\n")
    grid_rec = formats.read_manifest(out / "grid.txt")
    assert float(grid_rec["box_area"]) == 2.0


def test_constant_synth_and_overrides(tmp_path, config):
    out = tmp_path / "c"
    assert run("gen", "--config", config, "--seed", 1, "--out", out, "--synth", "constant:0.25",
               "--n_t", "1") == 0
    values = [line.split(",")[-1] for line in (out / "scattering.csv").read_text().splitlines()[1:]]
    assert len(values) == 3 * 1 * 2 and len(set(values)) == 1
    assert float(values[0]) == 0.25


def test_usage_errors(tmp_path, config, capsys):
    assert run("gen", "--config", config, "--seed", 1, "--out", tmp_path / "a", "--J", 4) == 2
    assert "not prime" in capsys.readouterr().err
    assert run("gen", "--config", config, "--seed", 1, "--out", tmp_path / "b", "--bogus", 1) == 2
    assert run("sound", "--config", config, "--out", tmp_path / "missing") == 2
    out = tmp_path / "c"
    assert run("gen", "--config", config, "--seed", 1, "--out", out) == 0
    assert run("sound", "--config", config, "--out", out, "--L", 0) == 2
    assert run("identify", "--config", config, "--out", out, "--mode", "estimate") == 2


def test_degenerate_cover_exit_code(tmp_path, config):
    # cells (0,0) and (2,0) are congruent mod J=2, so every weight draw gives equal columns
    rc = run("gen", "--config", config, "--seed", 1, "--out", tmp_path / "d", "--J", 2,
             "--n_a", 3, "--n_b", 1, "--cells", "0:0,2:0")
    assert rc == 3


def test_estimate_on_zero_scattering(tmp_path, config):
    out = tmp_path / "z"
    assert run("gen", "--config", config, "--seed", 2, "--out", out, "--synth", "constant:0") == 0
    assert run("sound", "--config", config, "--out", out) == 0
    assert run("identify", "--config", config, "--out", out, "--mode", "estimate") == 0
    assert (out / "reconstruction_estimate.csv").read_text() == "a,b,s,q,value\n"


def test_sound_single_echo_deterministic(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("gen", "--config", config, "--seed", 3, "--out", d) == 0
        assert run("sound", "--config", config, "--out", d, "--L", 1) == 0
    assert (a / "echoes.bin").read_bytes() == (b / "echoes.bin").read_bytes()


def test_scattering_file_input(tmp_path, config):
    g = build_grid(3, 1.0, 2, 2, 3, 2)
    cover = Cover(((0, 0), (1, 1), (2, 0)), 3)
    sf = ScatteringFunction(g, cover, np.random.default_rng(1).random((3, 2, 2)))
    formats.write_scattering_csv(tmp_path / "truth.csv", sf)
    formats.write_mask(tmp_path / "mask.txt", [[1, 0], [0, 1], [1, 0]])
    cfg = tmp_path / "file.cfg"
    cfg.write_text(CONFIG.replace("cells=0:0,1:1,2:0\n", "mask=mask.txt\n")
                   .replace("synth=random\n", "scattering=truth.csv\n"))
    out = tmp_path / "f"
    assert run("gen", "--config", cfg, "--seed", 4, "--out", out) == 0
    assert filecmp.cmp(out / "scattering.csv", tmp_path / "truth.csv", shallow=False)


def test_config_comments(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# grid\n" + CONFIG.replace("synth=random", "synth=random   # uniform values"))
    out = tmp_path / "o"
    assert run("gen", "--config", cfg, "--seed", 1, "--out", out) == 0
    assert formats.read_manifest(cfg)["synth"] == "random"
