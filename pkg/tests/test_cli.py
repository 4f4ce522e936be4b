import numpy as np
import pytest

from geotex import cli, io, pipeline
from geotex.errors import SolveFailedError
from geotex.imaging import Contour
from geotex.meshing import plane_grid

from helpers import blob_contour


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--case", "plane", "--resolution", "80", "--texture", "smooth",
                     "--out-dir", str(d)]) == 0
    return d


def retexture_args(d, out, *extra):
    return ["retexture", "--scene-color", str(d / "scene_color.png"), "--scene-depth", str(d / "scene_depth.png"),
            "--scene-mask", str(d / "scene_mask.png"), "--flat-color", str(d / "flat_color.png"),
            "--flat-mask", str(d / "flat_mask.png"), "--config", str(d / "params.cfg"), "--out", str(out), *extra]


def test_synth_writes_job(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"scene_color.png", "scene_depth.png", "scene_mask.png", "flat_color.png", "flat_mask.png",
            "params.cfg", "flat_landmarks.csv", "scene_landmarks.csv"} <= names
    p = pipeline.Params.from_mapping(io.read_config(synth_dir / "params.cfg"))
    assert p.fx == 96.0


def test_retexture_with_dumps(synth_dir, tmp_path):
    args = retexture_args(synth_dir, tmp_path / "out.png", "--dump-warp", str(tmp_path / "w.csv"),
                          "--dump-model", str(tmp_path / "m.csv"), "--dump-anchors", str(tmp_path / "a.csv"),
                          "--kernel", "euclidean", "--lambda", "1e4")
    assert cli.main(args) == 0
    assert io.read_color(tmp_path / "out.png").shape == (80, 80, 3)
    assert (tmp_path / "w.csv").read_text().startswith("vertex,row,col,flat_x,flat_y,valid")
    hdr = io.read_tps_header(tmp_path / "m.csv")
    assert hdr["kernel"] == "euclidean" and hdr["lambda"] == "10000.0" and int(hdr["n"]) >= 5
    assert (tmp_path / "a.csv").read_text().startswith("vertex,scene_x,scene_y,flat_x,flat_y")


def test_retexture_missing_input(synth_dir, tmp_path, capsys):
    args = retexture_args(synth_dir, tmp_path / "o.png")
    args[args.index("--scene-depth") + 1] = str(tmp_path / "nope.png")
    assert cli.main(args) == 2
    assert "geotex: error [input]" in capsys.readouterr().err


def test_retexture_numerical_failure_exit_3(synth_dir, tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise SolveFailedError("singular system", condition=1e20)

    monkeypatch.setattr(pipeline.tps, "solve", boom)
    assert cli.main(retexture_args(synth_dir, tmp_path / "o.png")) == 3
    assert "[tps]" in capsys.readouterr().err


def test_bad_config_key_exit_2(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("flux = 3\n")
    args = retexture_args(synth_dir, tmp_path / "o.png")
    args[args.index("--config") + 1] = str(cfg)
    assert cli.main(args) == 2
    assert "flux" in capsys.readouterr().err


def test_register(tmp_path):
    m = blob_contour(np.random.default_rng(0), 120) * 200 + 50
    io.write_contour(tmp_path / "m.csv", Contour(m))
    io.write_contour(tmp_path / "s.csv", Contour(m * 1.1 + 7))
    assert cli.main(["register", "--model", str(tmp_path / "m.csv"), "--scene", str(tmp_path / "s.csv"),
                     "--out-pairs", str(tmp_path / "p.csv")]) == 0
    pairs = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert len(pairs) == 120
    np.testing.assert_array_equal(pairs[:, 1], np.arange(120))


def test_geodesic(tmp_path):
    io.write_obj(str(tmp_path / "g.obj"), plane_grid(6))
    out = tmp_path / "f.csv"
    assert cli.main(["geodesic", "--mesh", str(tmp_path / "g.obj"), "--source", "0", "--out", str(out)]) == 0
    f = np.loadtxt(out, delimiter=",", skiprows=1)
    assert f[0, 1] == 0.0 and abs(f[6, 1] - 6.0) < 1e-9
    assert cli.main(["geodesic", "--mesh", str(tmp_path / "g.obj"), "--source", "999", "--out", str(out)]) == 2


def test_eval_landmarks(tmp_path, capsys):
    io.write_landmarks(tmp_path / "p.csv", {"a": (3.0, 4.0), "b": (0.0, 0.0)})
    io.write_landmarks(tmp_path / "t.csv", {"a": (0.0, 0.0), "b": (0.0, 0.0)})
    assert cli.main(["eval-landmarks", "--pred", str(tmp_path / "p.csv"), "--truth", str(tmp_path / "t.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["a,5.000000", "b,0.000000", "mean_distance,2.500000", "mean_squared,12.500000"]


def test_bench_small(capsys):
    assert cli.main(["bench", "--sizes", "256", "1024", "--python-sizes", "256", "--repeat", "1"]) == 0
    assert "N log N" in capsys.readouterr().out


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
