import numpy as np
import pytest

from oracles import tiny_representation
from proxyvid.representation import frame_mesh, param_count, trajectory_count, validate


def test_valid_representation_has_no_violations():
    rep, _ = tiny_representation(seed=0)
    assert validate(rep) == []
    assert trajectory_count(rep) == sum(l.n_nodes for l in rep.layers) * 3 * 2


def test_validate_reports_each_violation():
    rep, _ = tiny_representation(seed=0)
    bad = rep.with_codes([rep.codes[0][:-1], rep.codes[1]])
    assert any("row-count mismatch" in p for p in validate(bad))
    c = [rep.codes[0].copy(), rep.codes[1]]
    c[0][0, 0] = np.inf
    assert any("non-finite code" in p for p in validate(rep.with_codes(c)))
    wrong_dim = rep.with_codes([np.zeros((len(c), 5)) for c in rep.codes])
    assert any("code dimension" in p for p in validate(wrong_dim))
    short = rep.with_codes(rep.codes)
    short.meta["n_frames"] = 2
    assert any("span all frames" in p or "outside the video" in p for p in validate(short))
    short.meta["n_frames"] = 3
    short.meta["height"] = 10
    assert any("mask size" in p for p in validate(short))
    short.meta["height"] = 12
    short.masks = short.masks[:1]
    assert any("masks/layers" in p for p in validate(short))


def test_with_codes_shares_geometry_and_copies_meta():
    rep, _ = tiny_representation(seed=1)
    new = rep.with_codes([c * 0 for c in rep.codes])
    assert new.layers is rep.layers and new.decoder is rep.decoder
    new.meta["x"] = 1
    assert "x" not in rep.meta
    assert np.all(new.all_codes() == 0) and not np.all(rep.all_codes() == 0)
    assert np.array_equal(rep.code_offsets(), [0, rep.layers[0].n_nodes, rep.all_codes().shape[0]])
    assert param_count(new) == param_count(rep)


def test_frame_mesh_merges_duplicates():
    pts = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 0.0], [4.0, 4.0]])
    mesh = frame_mesh(pts)
    assert np.array_equal(mesh.node_ids, [0, 1, 2, 4])
    ids, w = mesh.weights([[4.0, 0.0], [1.0, 1.0]])
    assert 3 not in ids
    assert ids[0][np.argmax(w[0])] == 1
    assert np.allclose(w.sum(axis=1), 1.0)


@pytest.mark.parametrize("pts", [[[1.0, 1.0]], [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], [[3.0, 3.0], [3.0, 3.0]]])
def test_frame_mesh_degenerate_uses_nearest_node(pts):
    mesh = frame_mesh(np.array(pts))
    assert mesh.tri is None
    ids, w = mesh.weights([[0.1, 0.2], [2.9, 3.1]])
    assert np.all(w[:, 0] == 1.0) and np.all(w[:, 1:] == 0)
    p = np.array(pts)
    for q, row in zip([[0.1, 0.2], [2.9, 3.1]], ids):
        assert row[0] == int(np.argmin(np.hypot(*(p - q).T)))
