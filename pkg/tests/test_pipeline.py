import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geotex import tps
from geotex.errors import EmptySurfaceError, InputError
from geotex.meshing import DepthFrame, Intrinsics, plane_grid
from geotex.pipeline import (STAGES, LandmarkSet, Params, RetextureJob, eval_landmarks, forward_landmarks,
                             run, sample_bilinear, shade, warp_landmarks)
from geotex.synthetic import make_synthetic


@pytest.fixture(scope="module")
def plane():
    case = make_synthetic("plane", 96, "smooth")
    return case, run(case.job)


def test_shade_examples():
    c = np.array([[[200.0, 100.0, 50.0]]])
    np.testing.assert_array_equal(shade(c, np.ones((1, 1)), gain=1.0), c)
    np.testing.assert_array_equal(shade(c, np.ones((1, 1))), c)  # default gain saturates
    np.testing.assert_array_equal(shade(c, np.zeros((1, 1))), 0 * c)
    np.testing.assert_allclose(shade(c, np.full((1, 1), 0.25), gain=2.0), c / 2)
    assert shade(c, None) is not None and np.array_equal(shade(c, None), c)
    with pytest.raises(InputError):
        shade(c, np.full((1, 1), 1.5))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.5, 3), st.floats(0.3, 2))
def test_shade_monotone_in_ir(a, b, gain, gamma):
    c = np.array([[120.0, 30.0, 250.0]])
    lo, hi = sorted((a, b))
    s_lo = shade(c, np.array([lo]), gain, gamma)
    s_hi = shade(c, np.array([hi]), gain, gamma)
    assert np.all(s_lo <= s_hi + 1e-12) and np.all(s_hi <= c + 1e-12)


def test_sample_bilinear():
    img = np.arange(12, dtype=float).reshape(3, 4)
    np.testing.assert_allclose(sample_bilinear(img, [[1.5, 1.0], [0, 0], [3, 2], [9, -4]]), [5.5, 0, 11, 3])


def test_eval_landmarks_examples():
    truth = {"a": (0.0, 0.0), "b": (10.0, 10.0)}
    pred = {"a": (3.0, 4.0), "b": (10.0, 10.0)}
    r = eval_landmarks(pred, truth)
    assert r["mean_distance"] == 2.5 and r["mean_squared"] == 12.5
    assert r["per_landmark"] == [("a", 5.0), ("b", 0.0)]
    assert eval_landmarks(truth, truth)["mean_distance"] == 0.0
    r = eval_landmarks({"p": (3.0, 4.0)}, {"p": (0.0, 0.0)})
    assert r["mean_distance"] == 5.0 and r["mean_squared"] == 25.0
    r = eval_landmarks({"p": (1.0, 1.0), "q": (10.0, 0.0)}, {"p": (1.0, 1.0), "q": (0.0, 0.0)})
    assert r["mean_distance"] == 5.0 and r["mean_squared"] == 50.0
    with pytest.raises(InputError):
        eval_landmarks({"a": (0, 0)}, truth)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=10),
       st.integers(0, 10_000))
def test_eval_landmarks_symmetric(pts, seed):
    other = np.array(pts) + np.random.default_rng(seed).normal(0, 5, (len(pts), 2))
    a = {f"p{i}": p for i, p in enumerate(pts)}
    b = {f"p{i}": tuple(p) for i, p in enumerate(other)}
    ab, ba = eval_landmarks(a, b), eval_landmarks(b, a)
    assert ab["mean_distance"] == ba["mean_distance"] and ab["per_landmark"] == ba["per_landmark"]
    r = eval_landmarks(LandmarkSet(a), LandmarkSet(b))
    assert r["mean_squared"] >= r["mean_distance"] ** 2 - 1e-9


def grid_warp(fn, k=10):
    mesh = plane_grid(k)
    xy = mesh.vertices[:, :2]
    return mesh, xy, tps.WarpField(fn(xy), np.ones(len(xy), bool))


def test_warp_landmarks_identity_and_translation():
    lm = LandmarkSet({"a": (2.3, 4.6), "b": (7.0, 1.25)}, frame="flat")
    mesh, xy, w = grid_warp(lambda p: p)
    got = warp_landmarks(lm, w, mesh, xy)
    np.testing.assert_allclose(got.array(["a", "b"]), lm.array(["a", "b"]), atol=1e-12)
    mesh, xy, w = grid_warp(lambda p: p + [3.0, -2.0])
    got = warp_landmarks(LandmarkSet({"a": (5.3, 2.6)}, frame="flat"), w, mesh, xy)
    np.testing.assert_allclose(got.points["a"], (2.3, 4.6), atol=1e-12)
    assert got.unmatched == ()


def test_warp_landmarks_outside_unmatched():
    mesh, xy, w = grid_warp(lambda p: p)
    got = warp_landmarks(LandmarkSet({"far": (50.0, 50.0), "in": (5.0, 5.0)}, frame="flat"), w, mesh, xy)
    assert got.unmatched == ("far",) and got.names == ["in"]


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 9.0), st.floats(1.0, 9.0), st.floats(-0.3, 0.3))
def test_forward_then_inverse_round_trip(x, y, shear):
    mesh, xy, w = grid_warp(lambda p: p @ np.array([[1.2, shear], [0.1, 0.9]]) + [4.0, 1.0])
    scene = LandmarkSet({"p": (x, y)})
    flat = forward_landmarks(scene, w, mesh, xy)
    assert flat.frame == "flat"
    back = warp_landmarks(flat, w, mesh, xy)
    np.testing.assert_allclose(back.points["p"], (x, y), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_smooth_warp_round_trip(seed):
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.1, 0.4, 2)

    def smooth(p):
        return 3.0 * p + 1.5 * np.sin(p[:, ::-1] * freq) + 4.0

    mesh, xy, w = grid_warp(smooth, k=20)
    pts = rng.uniform(2, 18, (8, 2))
    scene = LandmarkSet({f"p{i}": p for i, p in enumerate(pts)})
    back = warp_landmarks(forward_landmarks(scene, w, mesh, xy), w, mesh, xy)
    assert back.unmatched == ()
    assert np.abs(back.array(scene.names) - pts).max() < 1.0


def test_params_from_mapping():
    p = Params.from_mapping({"lambda": "-1000", "kernel": "euclidean", "scales": "0.4,0.2",
                             "max_evals": "5,5", "tps_regularization": "0.1,0.01", "use_flags": "off",
                             "contour_points": "200", "fx": "500"})
    assert p.lam == -1000.0 and p.kernel == "euclidean" and p.scales == (0.4, 0.2)
    assert p.max_evals == (5, 5) and p.use_flags is False and p.contour_points == 200 and p.fx == 500.0
    assert Params.from_mapping(p.to_mapping()) == p
    assert "lambda" in p.to_mapping()


@pytest.mark.parametrize("bad", [{"nope": "1"}, {"kernel": "heat"}, {"solver": "bfs"}, {"lam": "abc"},
                                 {"use_flags": "maybe"}, {"anchor_points": "2"}, {"opening_radius": "-1"}])
def test_params_rejects(bad):
    with pytest.raises(InputError):
        Params.from_mapping(bad)


def test_params_intrinsics_required():
    with pytest.raises(InputError):
        Params().intrinsics()
    assert Params(fx=1.0, fy=2.0, cx=3.0, cy=4.0).intrinsics() == Intrinsics(1.0, 2.0, 3.0, 4.0)


def test_job_shape_validation():
    K = Intrinsics(100.0, 100.0, 5.0, 5.0)
    d = DepthFrame(np.full((10, 10), 1000.0), K)
    ok = dict(scene_color=np.zeros((10, 10, 3), np.uint8), scene_depth=d, scene_mask=np.ones((10, 10), bool),
              flat_color=np.zeros((8, 6, 3), np.uint8), flat_mask=np.ones((8, 6), bool))
    RetextureJob(**ok)
    for key, val in [("scene_mask", np.ones((9, 10), bool)), ("scene_color", np.zeros((10, 11, 3))),
                     ("flat_mask", np.ones((8, 7), bool))]:
        with pytest.raises(InputError):
            RetextureJob(**{**ok, key: val})
    with pytest.raises(InputError):
        RetextureJob(**ok, scene_ir=np.ones((3, 3)))


def test_plane_run_recovers_landmarks(plane):
    case, res = plane
    pred = warp_landmarks(case.flat_landmarks, res.warp, res.mesh)
    assert pred.unmatched == ()
    assert eval_landmarks(pred, case.scene_landmarks)["mean_distance"] < 1.0


def test_plane_run_products(plane):
    case, res = plane
    assert res.image.shape == case.job.scene_color.shape and res.image.dtype == np.uint8
    assert len(res.anchor_vertices) == len(np.unique(res.anchor_vertices)) <= Params().anchor_points
    assert res.model.kernel == tps.GEODESIC and res.table is not None
    assert res.pixel_vertex.shape == case.job.scene_mask.shape


def test_pixels_outside_mask_unchanged(plane):
    case, res = plane
    out = ~case.job.scene_mask
    np.testing.assert_array_equal(res.image[out], case.job.scene_color[out])


def test_run_deterministic(plane):
    case, res = plane
    again = run(case.job)
    assert np.array_equal(again.image, res.image)
    assert np.array_equal(again.warp.coords, res.warp.coords, equal_nan=True)


def test_ir_darkens_output():
    case = make_synthetic("plane", 96, "smooth")
    ir = np.full(case.job.scene_mask.shape, 0.25)
    case.job.scene_ir = ir
    dark = run(case.job).image
    m = case.job.scene_mask
    bright = run(make_synthetic("plane", 96, "smooth").job).image
    assert dark[m].astype(float).mean() < bright[m].astype(float).mean()


def test_empty_scene_mask_is_stage_tagged():
    case = make_synthetic("plane", 96)
    case.job.scene_mask[:] = False
    with pytest.raises(EmptySurfaceError) as exc:
        run(case.job)
    assert exc.value.stage == "mask"
    assert str(exc.value).startswith("[mask]")


def test_stages_listed():
    assert STAGES == ("mask", "meshing", "contour", "registration", "geodesics", "tps", "render")

