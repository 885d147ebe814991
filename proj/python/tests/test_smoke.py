import math

import numpy as np
import pytest

import geotrack as gt


def path_mesh(n):
    pts = np.array([[i, 0.0, 0.0] for i in range(n)])
    return gt.Mesh.from_edges(pts, [(i, i + 1) for i in range(n - 1)])


def test_path_distances():
    d = gt.geodesic_distances(path_mesh(5), 0)
    assert d == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert gt.mesh_center(path_mesh(5)) == 2


def test_triangle_mesh_arrays():
    m = gt.Mesh(np.eye(3), [(0, 1, 2)])
    assert m.num_vertices == 3
    assert m.num_edges == 3
    assert m.vertices.shape == (3, 3)
    assert all(math.isclose(e[2], math.sqrt(2)) for e in m.edges)


def test_anchor_descriptors_match_distances():
    m = path_mesh(5)
    anchors = gt.detect_anchors(m, 1.5)
    assert sorted(anchors.vertices) == [0, 4]
    table = gt.descriptors(m, anchors)
    assert table.shape == (5, 2)
    col = anchors.labels.index(anchors.labels[0])
    src = anchors.vertices[col]
    assert list(table[:, col]) == gt.geodesic_distances(m, src)


def test_self_match_and_gmds():
    m = path_mesh(4)
    a = gt.detect_anchors(m, 1.5)
    pairs = gt.match_vertices(m, a, m, a, e_max=0.0)
    assert sorted(pairs) == [(v, v) for v in range(4)]
    assert gt.gmds_distance(m, m) == 0.0


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        gt.Mesh(np.zeros((2, 2)), [])
    with pytest.raises(OSError):
        gt.load_mesh("/no/such/file.ply")


def test_short_tracking_run():
    body = gt.SyntheticBody(n_frames=4, pitch=0.02)
    frames = [body.mesh(f) for f in range(4)]
    truth = np.stack([body.skeleton(f) for f in range(4)])
    assert truth.shape == (4, 21, 3)
    tracked = gt.track(frames, truth[0], gt.reference_motion("upper"))
    assert tracked.shape == (4, 21, 3)
    assert np.all(np.isfinite(tracked))
    assert gt.per_occlusion_error(tracked, truth) < 0.1


def test_evaluate_exact_runs():
    truth = np.random.default_rng(0).normal(size=(3, 21, 3))
    report = gt.evaluate({r: truth for r in gt.eval_radii}, truth)
    assert report["r_or"] == [0.0] * 6
    assert len(report["r_i"]) == len(gt.joint_names) == 21
