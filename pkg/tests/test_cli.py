import math
import shutil
import subprocess

import numpy as np
import pytest

from dmap.cli import main
from dmap.io import ScanSequence, import_snapshot, read_sequence, write_sequence
from dmap.geometry import SensorModel


@pytest.fixture(scope="module")
def seqfile(tmp_path_factory):
    p = tmp_path_factory.mktemp("seq") / "room.dseq"
    assert main(["simulate", str(p), "--scans", "4", "--angular-resolution", "2", "--resolution", "0.25"]) == 0
    return p


def test_build_is_deterministic(tmp_path, seqfile):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["build", str(seqfile), "--resolution", "0.25", "--out", str(a)]) == 0
    assert main(["build", str(seqfile), "--resolution", "0.25", "--out", str(b)]) == 0
    assert (a / "map.snapshot").read_bytes() == (b / "map.snapshot").read_bytes()
    assert (a / "stats.csv").exists() and (a / "summary.txt").exists()


def test_report_reads_build_output(tmp_path, seqfile, capsys):
    out = tmp_path / "o"
    main(["build", str(seqfile), "--resolution", "0.25", "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "frames = 4" in text and "mean_update_time" in text


def test_empty_sequence(tmp_path):
    p = tmp_path / "empty.dseq"
    write_sequence(p, ScanSequence(SensorModel(10.0, 2 * math.pi, 1.0, 0.02), 0.5, []))
    out = tmp_path / "o"
    assert main(["build", str(p), "--resolution", "0.5", "--out", str(out)]) == 0
    text = (out / "map.snapshot").read_text()
    assert "\nunknown 1\n" in text and text.endswith("occupied 0\n")


def test_query(tmp_path, seqfile, capsys):
    out = tmp_path / "o"
    main(["build", str(seqfile), "--resolution", "0.25", "--out", str(out)])
    seq = read_sequence(seqfile)
    pts = np.vstack([seq.frames[0].points[:3], [[500.0, 0, 0]], seq.frames[0].pose.translation])
    pf = tmp_path / "pts.txt"
    np.savetxt(pf, pts)
    capsys.readouterr()
    assert main(["query", str(out / "map.snapshot"), str(pf)]) == 0
    lines = capsys.readouterr().out.split()
    assert lines == ["Occupied"] * 3 + ["Unknown", "Free"]
    assert main(["query", str(out / "map.snapshot"), str(pf), "--out", str(tmp_path / "s.txt")]) == 0
    assert (tmp_path / "s.txt").read_text().split() == lines
    m = import_snapshot((out / "map.snapshot").read_text())
    assert m.config.resolution == 0.25


def test_compare(tmp_path, seqfile, capsys):
    capsys.readouterr()
    assert main(["compare", str(seqfile), "--resolutions", "0.5,0.25", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "agreement.csv").read_text().splitlines()
    assert rows[0].startswith("resolution,unknown,free,occupied")
    assert len(rows) == 3
    for r in rows[1:]:
        vals = [float(v) for v in r.split(",")]
        assert vals[3] == 1.0


def test_fgamma(tmp_path, capsys):
    capsys.readouterr()
    args = ["fgamma", "--range", "10", "--resolution", "0.5", "--gammas", "1,3", "--cells", "5000", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    first = capsys.readouterr().out
    rows = (tmp_path / "fgamma.csv").read_text().splitlines()
    assert rows[0] == "gamma,f_analytic,f_empirical" and len(rows) == 3
    assert rows[1].split(",")[1:] == ["1.0", "1.0"]
    main(args)
    assert capsys.readouterr().out == first


def test_convert_round_trip(tmp_path, seqfile):
    t, b = tmp_path / "x.txt", tmp_path / "y.dseq"
    assert main(["convert", str(seqfile), str(t)]) == 0
    assert main(["convert", str(t), str(b)]) == 0
    assert b.read_bytes() == seqfile.read_bytes()


def test_config_file(tmp_path, seqfile):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[dmap]\nresolution = 0.5\nepsilon = 0.7\n")
    out = tmp_path / "o"
    assert main(["build", str(seqfile), "--config", str(cfg), "--out", str(out)]) == 0
    text = (out / "map.snapshot").read_text()
    assert "resolution 0.5\n" in text and "epsilon 0.7\n" in text
    assert main(["build", str(seqfile), "--config", str(cfg), "--omega", "0.9", "--out", str(out)]) == 0
    assert "gamma 1.0\n" not in (out / "map.snapshot").read_text()


@pytest.mark.parametrize(
    "argv",
    [[], ["bogus"], ["build"], ["build", "x.dseq"], ["fgamma", "--gammas", "a,b"],
     ["build", "{seq}", "--out", "{out}", "--gamma", "2", "--omega", "0.9"],
     ["compare", "{seq}", "--region", "1,2,3"], ["build", "{seq}", "--out", "{out}", "--mode", "fast"]],
)
def test_usage_errors_exit_1(argv, tmp_path, seqfile):
    argv = [a.format(seq=seqfile, out=tmp_path / "o") for a in argv]
    assert main(argv) == 1


def test_data_errors_exit_2(tmp_path, seqfile):
    out = str(tmp_path / "o")
    assert main(["build", str(tmp_path / "missing.dseq"), "--out", out]) == 2
    bad = tmp_path / "bad.dseq"
    bad.write_bytes(seqfile.read_bytes()[:-7])
    assert main(["build", str(bad), "--out", out]) == 2
    cfg = tmp_path / "c.ini"
    cfg.write_text("[dmap]\nunknown_key = 1\n")
    assert main(["build", str(seqfile), "--config", str(cfg), "--out", out]) == 2
    assert main(["build", str(seqfile), "--resolution", "-1", "--out", out]) == 2
    assert main(["report", str(tmp_path / "nothing")]) == 2
    assert main(["query", str(seqfile), str(seqfile)]) == 2


def test_data_error_names_frame(tmp_path, seqfile, capsys):
    bad = tmp_path / "bad.dseq"
    bad.write_bytes(seqfile.read_bytes()[:-7])
    main(["build", str(bad), "--out", str(tmp_path / "o")])
    assert "frame 3" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("dmap") is None, reason="console script not installed")
def test_console_script(tmp_path, seqfile):
    r = subprocess.run(["dmap", "report", str(tmp_path / "none.csv")], capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run(["dmap"], capture_output=True, text=True)
    assert r.returncode == 1
