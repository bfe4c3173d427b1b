import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from amoebamorph import __version__, _parallel
from amoebamorph.cli import run
from amoebamorph.grid import Image, pgm_read, pgm_write


def write_pgm(path, data):
    path.write_bytes(pgm_write(Image(data)))
    return str(path)


@pytest.fixture
def disk_pgm(tmp_path):
    yy, xx = np.mgrid[0:40, 0:40]
    return write_pgm(tmp_path / "disk.pgm", np.where(np.hypot(xx - 19.5, yy - 19.5) <= 10, 200, 50))


@pytest.fixture
def noise_pgm(tmp_path):
    rng = np.random.default_rng(0)
    return write_pgm(tmp_path / "noise.pgm", rng.integers(0, 256, (24, 24)))


def read_csv(path):
    lines = [ln for ln in open(path) if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def listing(tmp_path):
    return sorted(p.name for p in tmp_path.iterdir())


def test_filter_example_from_captions(tmp_path, noise_pgm):
    out = tmp_path / "out.pgm"
    code = run(["filter", "--op", "median", "--metric", "l2", "--beta", "0.2", "--rho", "7", "--iter", "5",
                noise_pgm, str(out)])
    assert code == 0
    img = pgm_read(out.read_bytes())
    assert img.shape == (24, 24)


def test_unknown_flag_exits_2_without_outputs(tmp_path, noise_pgm, capsys):
    before = listing(tmp_path)
    assert run(["filter", "--bogus", "1", noise_pgm, str(tmp_path / "o.pgm")]) == 2
    assert listing(tmp_path) == before
    assert "--bogus" in capsys.readouterr().err


@pytest.mark.parametrize("argv,flag", [
    (["filter", "--rho", "-1"], "--rho"),
    (["filter", "--op", "sharpen"], "--op"),
    (["filter", "--op", "rank", "--rule", "quantile:7"], "--rule"),
    (["aac", "--init", "circle:100,1,3"], "--init"),
    (["aac", "--init", "hexagon:1"], "--init"),
])
def test_usage_errors_name_the_flag(tmp_path, noise_pgm, capsys, argv, flag):
    before = listing(tmp_path)
    code = run(argv[:1] + [noise_pgm, str(tmp_path / "o.pgm")] + argv[1:])
    assert code == 2
    assert flag in capsys.readouterr().err
    assert listing(tmp_path) == before


def test_missing_input_is_usage_error(tmp_path, capsys):
    assert run(["filter", str(tmp_path / "nope.pgm"), str(tmp_path / "o.pgm")]) == 2
    assert "input" in capsys.readouterr().err


def test_numeric_blowup_exits_1_without_outputs(tmp_path, noise_pgm):
    before = listing(tmp_path)
    code = run(["pde", "--eq", "selfsnakes", "--tau", "1e300", "--iter", "5", noise_pgm, str(tmp_path / "o.pgm"),
                "--csv", str(tmp_path / "d.csv")])
    assert code == 1
    assert listing(tmp_path) == before


def test_perturb_levelline_analytic_is_sinc(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["perturb", "--case", "levelline", "--k", "3", "--rho", "1", "--mesh", "0.01", "--csv", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1
    assert float(rows[0]["analytic_lambda"]) == pytest.approx(math.sin(3) / 3, abs=1e-15)
    assert float(rows[0]["k"]) == 3.0


def test_outputs_carry_version_and_digest(tmp_path, disk_pgm):
    o, c = tmp_path / "o.pgm", tmp_path / "a.csv"
    assert run(["aac", disk_pgm, str(o), "--init", "circle:19.5,19.5,15", "--rho", "6", "--csv", str(c)]) == 0
    head = o.read_bytes().split(b"\n")[:3]
    assert head[1] == f"# amoebamorph {__version__} aac".encode()
    assert head[2].startswith(b"# config ")
    lines = open(c).read().splitlines()
    assert lines[0] == f"# amoebamorph {__version__} aac"
    assert lines[1] == head[2].decode()


def test_config_file_with_flag_override(tmp_path, noise_pgm):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# filter settings\nop = dilate\nrho = 3\nbeta = 0.5\n")
    a, b, c = (tmp_path / n for n in ("a.pgm", "b.pgm", "c.pgm"))
    assert run(["filter", "--config", str(cfg), noise_pgm, str(a)]) == 0
    assert run(["filter", "--op", "dilate", "--rho", "3", "--beta", "0.5", noise_pgm, str(b)]) == 0
    assert run(["filter", "--config", str(cfg), "--rho", "2", noise_pgm, str(c)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert b"rho=2.0" in c.read_bytes().split(b"\n")[3]
    assert pgm_read(a.read_bytes()) != pgm_read(c.read_bytes())


def test_config_errors(tmp_path, noise_pgm, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("radius = 3\n")
    assert run(["filter", "--config", str(cfg), noise_pgm, str(tmp_path / "o.pgm")]) == 2
    assert "radius" in capsys.readouterr().err
    cfg.write_text("op = sharpen\n")
    assert run(["filter", "--config", str(cfg), noise_pgm, str(tmp_path / "o.pgm")]) == 2
    assert run(["filter", "--config", str(tmp_path / "none.cfg"), noise_pgm, str(tmp_path / "o.pgm")]) == 2


def test_threads_setting_is_restored(tmp_path, noise_pgm):
    saved = _parallel.get_threads()
    assert run(["filter", "--threads", "3", noise_pgm, str(tmp_path / "o.pgm")]) == 0
    assert _parallel.get_threads() == saved


PIPELINES = {
    "filter": lambda d, i: ["filter", "--op", "open", "--rho", "4", i, f"{d}/o.pgm"],
    "pde": lambda d, i: ["pde", "--eq", "gac", "--init", "circle:19.5,19.5,15", "--gamma", "-0.3", "--sigma", "1",
                         "--iter", "20", "--snapshot-every", "10", "--snapshot-prefix", f"{d}/snap", i, f"{d}/o.pgm",
                         "--contour-csv", f"{d}/c.csv", "--csv", f"{d}/d.csv", "--png", f"{d}/p.png"],
    "aac": lambda d, i: ["aac", i, f"{d}/o.pgm", "--init", "polygon:5,5;35,6;33,34;4,30", "--rule", "qbias:0.05",
                         "--rho", "5", "--contour-csv", f"{d}/c.csv", "--csv", f"{d}/a.csv", "--png", f"{d}/p.png"],
    "perturb": lambda d, i: ["perturb", "--case", "gradient", "--k", "5,10", "--mesh", "0.05", "--max-samples", "32",
                             "--csv", f"{d}/p.csv", "--png", f"{d}/p.png"],
    "descriptor": lambda d, i: ["descriptor", i, "--setup", "GwE", "--index", "dehmer_fp", "--rho", "3",
                                "--out", f"{d}/m.pgm", "--out-eq", f"{d}/e.pgm", "--csv", f"{d}/m.csv",
                                "--png", f"{d}/m.png"],
    "discriminate": lambda d, i: ["discriminate", "--synthetic", "--size", "20", "--desc", "harary@TwA",
                                  "meaninfo@TuE", "--rho", "3", "--csv", f"{d}/t.csv", "--thresholds-csv",
                                  f"{d}/th.csv"],
    "texseg": lambda d, i: ["texseg", "--size", "48", "--r-in", "8", "--r-out", "20", "--max-iter", "60",
                            "--overlay", f"{d}/o.pgm", "--contour-csv", f"{d}/c.csv", "--csv", f"{d}/s.csv",
                            "--maps-prefix", f"{d}/map_", "--png", f"{d}/p.png"],
}


@pytest.mark.parametrize("name", sorted(PIPELINES))
def test_pipeline_runs_and_is_thread_independent(tmp_path, disk_pgm, name):
    outs = []
    for threads in ("1", "8"):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        assert run(PIPELINES[name](d, disk_pgm) + ["--threads", threads]) == 0
        files = sorted(d.iterdir())
        assert files
        outs.append({p.name: p.read_bytes() for p in files})
    assert outs[0] == outs[1]


def test_texseg_without_init_on_input_is_usage_error(tmp_path, disk_pgm):
    assert run(["texseg", disk_pgm, "--csv", str(tmp_path / "s.csv")]) == 2
    assert not (tmp_path / "s.csv").exists()


def test_descriptor_needs_an_output(disk_pgm):
    assert run(["descriptor", disk_pgm]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "amoebamorph.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
    res = subprocess.run([sys.executable, "-m", "amoebamorph.cli", "nosuchcmd"], capture_output=True, text=True)
    assert res.returncode == 2
