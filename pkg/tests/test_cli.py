import json
import math
import subprocess
import sys

import numpy as np
import pytest

from breatherlab import cli
from breatherlab.core import ComplexField, build_grid
from breatherlab.formats import (FormatError, read_brth, read_csv, verify_manifest, write_brth, write_csv)

SMALL_CONSTRUCT = ["--axes", "t:0:1:4;r:0:10:21"]
SMALL_EVOLVE = ["--half-width", "20", "--periods", "9", "--spacing", "0.1", "--max-deviation", "5e-3"]


def run(tmp_path, *argv):
    return cli.main([argv[0], "--out", str(tmp_path)] + list(argv[1:]))


def listed(tmp_path):
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    return manifest, {e["path"] for e in manifest["outputs"]}


# -- argument handling -------------------------------------------------------------

def test_defaults_and_sources():
    cfg = cli.parse_config(["verify"])
    assert cfg["spacings"] == (0.1, 0.05, 0.025)
    assert cfg["alpha"] == 0.5
    assert set(cfg.sources.values()) == {"default"}


def test_flags_override_config_file(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# comment\nalpha = 0.2\nspacings = 0.1,0.05\n")
    cfg = cli.parse_config(["verify", "--config", str(conf), "--alpha", "0.3"])
    assert cfg["alpha"] == 0.3 and cfg.sources["alpha"] == "flag"
    assert cfg["spacings"] == (0.1, 0.05) and cfg.sources["spacings"] == "file"


def test_unknown_config_key_names_line(tmp_path, capsys):
    conf = tmp_path / "bad.cfg"
    conf.write_text("alpha = 0.5\nalpa = 0.2\n")
    assert cli.main(["verify", "--config", str(conf), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "bad.cfg:2" in err and "alpa" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("argv", [
    ["verify", "--alpa", "0.2"],
    ["frobnicate"],
    ["verify", "--spacings", "0.1"],
    ["verify", "--alpha", "abc"],
    ["construct", "--velocity", "0.5,0,0"],
    ["construct", "--mode", "1,0"],
    ["scan"],
    ["scan", "--d", "6.28", "--wall-separation", "3.14"],
    ["evolve", "--perturbation", "0.2"],
])
def test_usage_errors_exit_1(argv, tmp_path):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 1


def test_duplicate_key_rejected(tmp_path):
    conf = tmp_path / "dup.cfg"
    conf.write_text("alpha = 0.5\nalpha = 0.6\n")
    with pytest.raises(cli.ConfigError, match="twice"):
        cli.parse_config(["verify", "--config", str(conf)])


# -- commands ----------------------------------------------------------------------

def test_verify_passes_and_negative_control_fails(tmp_path):
    assert run(tmp_path / "a", "verify") == 0
    manifest, files = listed(tmp_path / "a")
    assert files == {"residuals_kg.csv", "residuals_qhj.csv"}
    assert manifest["status"] == "pass" and manifest["exit_code"] == 0
    assert manifest["results"]["kg"]["order"] == pytest.approx(2.0, abs=0.2)
    header, data = read_csv(tmp_path / "a" / "residuals_kg.csv")
    assert header == ["spacing", "l2", "linf"] and data.shape == (3, 3)
    assert run(tmp_path / "b", "verify", "--omega", "1.9") == 2
    assert listed(tmp_path / "b")[0]["status"] == "fail"


def test_verify_spinning(tmp_path):
    assert run(tmp_path, "verify", "--solution", "spinning", "--mode", "2,1") == 0


def test_construct_outputs(tmp_path):
    assert run(tmp_path, "construct", *SMALL_CONSTRUCT) == 0
    manifest, files = listed(tmp_path)
    assert files == {"field.csv", "field.brth"}
    assert set(p.name for p in tmp_path.iterdir()) == files | {"manifest.json"}
    assert verify_manifest(tmp_path / "manifest.json") == []
    fld = read_brth(tmp_path / "field.brth")
    assert fld.grid.shape == (4, 21)
    header, data = read_csv(tmp_path / "field.csv")
    assert header == ["t", "r", "re", "im"]
    assert np.allclose(data[:, 2] + 1j * data[:, 3], fld.values.reshape(-1), rtol=0, atol=1e-15)
    # psi(0, 0) = 1 + alpha
    assert data[0, 2] == 1.5 and data[0, 3] == 0.0


def test_manifest_detects_tampering(tmp_path):
    run(tmp_path, "construct", *SMALL_CONSTRUCT)
    with open(tmp_path / "field.csv", "a") as fh:
        fh.write("0,0,0,0\n")
    assert verify_manifest(tmp_path / "manifest.json") == ["field.csv"]


def test_manifest_records_config_and_inputs(tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text("p_max = 2.5\nd = 6.283185307179586\n")
    out = tmp_path / "out"
    assert cli.main(["scan", "--config", str(conf), "--out", str(out)]) == 0
    manifest, _ = listed(out)
    assert manifest["config"]["p_max"] == 2.5
    assert list(manifest["inputs"]) == [str(conf)]
    for key in ("tool", "version", "threads", "started", "wall_clock_seconds"):
        assert key in manifest


def test_scan_and_walls(tmp_path):
    assert run(tmp_path / "d", "scan", "--d", repr(2 * math.pi)) == 0
    _, q = read_csv(tmp_path / "d" / "quantized.csv")
    assert np.allclose(q[:, 1], [0, 1, 2, 3], atol=1e-10)
    assert run(tmp_path / "w", "scan", "--wall-separation", repr(math.pi)) == 0
    assert (tmp_path / "d" / "quantized.csv").read_bytes() == (tmp_path / "w" / "quantized.csv").read_bytes()


@pytest.mark.parametrize("well", ["harmonic", "ring", "quartic"])
def test_quantize(tmp_path, well):
    assert run(tmp_path, "quantize", "--well", well, "--n", "10..12") == 0
    header, data = read_csv(tmp_path / "levels.csv")
    assert list(data[:, 0]) == [10, 11, 12]


def test_trajectory(tmp_path):
    assert run(tmp_path, "trajectory", "--t-end", "2") == 0
    manifest, _ = listed(tmp_path)
    assert manifest["results"]["centroid_velocity"] == pytest.approx(1 / math.sqrt(2), rel=5e-3)
    header, data = read_csv(tmp_path / "trajectory.csv")
    assert np.allclose(data[:, 4], 1 / math.sqrt(2), rtol=1e-12)


def test_evolve_with_perturbation(tmp_path):
    assert run(tmp_path, "evolve", *SMALL_EVOLVE, "--perturbation", "0.01", "--dump", "true") == 0
    manifest, files = listed(tmp_path)
    assert files == {"probe.csv", "deviation.csv", "stability.csv", "final_state.brth"}
    assert manifest["results"]["growth_factor"] <= 1.05
    assert manifest["results"]["beat_frequency"] == pytest.approx(1.0, rel=1e-2)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "breatherlab", "scan", "--d", "6.283185307179586",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "scan: pass" in proc.stdout


# -- reproducibility across thread counts ---------------------------------------------

REPRO_CASES = {
    "construct": ["construct", "--axes", "t:0:2:9;r:0:10:101"],
    "verify": ["verify", "--solution", "boosted"],
    "scan": ["scan", "--wall-separation", "3.0"],
    "quantize": ["quantize", "--well", "quartic", "--n", "3..5"],
    "trajectory": ["trajectory", "--momentum", "0.5,0.2,0"],
    "evolve": ["evolve", *SMALL_EVOLVE, "--perturbation", "0.01", "--seed", "11"],
}


@pytest.mark.parametrize("name", sorted(REPRO_CASES))
def test_csvs_identical_across_thread_counts(name, tmp_path, monkeypatch):
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("BRTH_THREADS", threads)
        out = tmp_path / threads
        assert cli.main(REPRO_CASES[name] + ["--out", str(out)]) in (0, 2)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    assert outputs[0] and outputs[0] == outputs[1]


# -- formats -------------------------------------------------------------------------

def test_brth_round_trip(tmp_path):
    grid = build_grid([("t", 0.0, 1.0, 4), ("x", -1.0, 1.0, 5)])
    values = np.arange(20).reshape(4, 5) * (0.1 + 0.3j)
    path = write_brth(tmp_path / "f.brth", ComplexField(grid, values, "Psi"))
    back = read_brth(path)
    assert back.grid == grid
    assert np.array_equal(back.values, values)
    raw = path.read_bytes()
    assert raw[:4] == b"BRTH"
    assert len(raw) == 12 + 2 * (4 + 1 + 24) + 20 * 16


def test_brth_rejects_corrupt(tmp_path):
    p = tmp_path / "x.brth"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(FormatError):
        read_brth(p)
    grid = build_grid([("x", 0.0, 1.0, 4)])
    good = write_brth(tmp_path / "g.brth", ComplexField(grid, np.ones(4, complex), "Psi"))
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_brth(good)


def test_csv_precision_round_trip(tmp_path):
    values = [math.pi, 1 / 3, -2.5e-300, 7]
    write_csv(tmp_path / "v.csv", ["a", "b", "c", "n"], [values])
    text = (tmp_path / "v.csv").read_text().splitlines()[1]
    assert text.endswith(",7")
    _, data = read_csv(tmp_path / "v.csv")
    assert list(data[0]) == values
    with pytest.raises(FormatError):
        write_csv(tmp_path / "w.csv", ["a", "b"], [[1.0]])
