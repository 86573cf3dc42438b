import numpy as np
import pytest

from oracles import tiny_representation
from proxyvid import editing, metrics
from proxyvid.exceptions import EditError
from proxyvid.renderer import COMPOSITE, render_frame, render_sequence


def rounded(rep):
    rep.codes = [c.astype(np.float32).astype(np.float64) for c in rep.codes]
    return rep


@pytest.fixture
def rep():
    return rounded(tiny_representation(seed=21, size=16)[0])


def brute_trainable(rep, frame, region):
    """Vertices of every closed triangle containing a region pixel of the owning layer."""
    offsets = rep.code_offsets()
    rows = set()
    for y, x in zip(*np.nonzero(region)):
        owner = max(i for i, m in enumerate(rep.masks) if m.mask_at(frame)[y, x])
        mesh = rep.mesh(owner, frame)
        for tri in mesh.tri.triangles:
            a, b, c = mesh.points[tri]
            m = np.array([[a[0] - c[0], b[0] - c[0]], [a[1] - c[1], b[1] - c[1]]])
            l1, l2 = np.linalg.solve(m, [x - c[0], y - c[1]])
            if min(l1, l2, 1 - l1 - l2) >= -1e-9:
                rows.update(int(mesh.node_ids[v]) + int(offsets[owner]) for v in tri)
    return rows


def test_trainable_nodes_match_brute_force(rep):
    region = np.zeros((16, 16), dtype=bool)
    region[4:7, 3:9] = True  # straddles the foreground and background
    rows = editing.trainable_nodes(rep, 1, region)
    assert set(np.flatnonzero(rows).tolist()) == brute_trainable(rep, 1, region)
    one = np.zeros((16, 16), dtype=bool)
    one[8, 8] = True  # a grid node of the background: all incident triangles
    rows = editing.trainable_nodes(rep, 0, one)
    assert set(np.flatnonzero(rows).tolist()) == brute_trainable(rep, 0, one)
    assert rows.sum() >= 4


def test_edit_locality_and_fit(rep):
    region = np.zeros((16, 16), dtype=bool)
    region[10:14, 10:14] = True
    before = render_sequence(rep)
    rows = editing.trainable_nodes(rep, 1, region)
    # a reachable target: the render of perturbed trainable codes
    codes = rep.all_codes().copy()
    codes[rows] += np.random.default_rng(0).normal(0, 0.5, size=codes[rows].shape)
    offsets = rep.code_offsets()
    moved = rep.with_codes([codes[offsets[i]:offsets[i + 1]] for i in range(2)])
    target = before[1].copy()
    target[region] = render_frame(moved, 1)[region]
    new = editing.edit_keyframe(rep, 1, target, region, editing.EditConfig(steps=300, learning_rate=2e-2))
    old_codes, new_codes = rep.all_codes(), new.all_codes()
    assert np.array_equal(old_codes[~rows], new_codes[~rows])
    assert not np.array_equal(old_codes[rows], new_codes[rows])
    assert new.decoder is rep.decoder
    assert np.array_equal(rep.all_codes(), old_codes)  # original untouched
    after = render_sequence(new)
    assert metrics.psnr(before[1], target, region) < 30
    assert metrics.psnr(after[1], target, region) >= 30
    untouched = 0
    for t in range(rep.n_frames):
        for y in range(16):
            for x in range(16):
                owner = max(i for i, m in enumerate(rep.masks) if m.mask_at(t)[y, x])
                ids, _ = rep.mesh(owner, t).weights([[x, y]])
                if not rows[ids[0] + offsets[owner]].any():
                    untouched += 1
                    assert np.array_equal(after[t, y, x], before[t, y, x])
    assert untouched > 100
    assert new.meta["edit"]["frame"] == 1 and new.meta["edit"]["trainable_nodes"] == int(rows.sum())


def test_edit_fixed_point(rep):
    region = np.zeros((16, 16), dtype=bool)
    region[3:8, 3:8] = True
    before = render_sequence(rep)
    new = editing.edit_keyframe(rep, 0, before[0], region, editing.EditConfig(steps=50))
    after = render_sequence(new)
    for t in range(rep.n_frames):
        assert metrics.psnr(after[t], before[t]) > 40.0


def test_edit_errors(rep):
    region = np.zeros((16, 16), dtype=bool)
    img = np.zeros((16, 16, 3))
    with pytest.raises(EditError, match="empty"):
        editing.edit_keyframe(rep, 0, img, region)
    region[0, 0] = True
    with pytest.raises(EditError, match="out of range"):
        editing.edit_keyframe(rep, 5, img, region)
    with pytest.raises(EditError, match="must be"):
        editing.edit_keyframe(rep, 0, img[:8], region)
    with pytest.raises(EditError, match="region mask"):
        editing.edit_keyframe(rep, 0, img, region[:8])
    rep.masks[0].masks[0, 0, 0] = False
    with pytest.raises(EditError, match="outside all layers"):
        editing.edit_keyframe(rep, 0, img, region)


def test_inpaint(rep):
    assert np.array_equal(editing.inpaint(rep, []), render_sequence(rep))
    out = editing.inpaint(rep, [1])
    for t in range(rep.n_frames):
        assert np.array_equal(out[t], render_frame(rep, t, COMPOSITE, [0]))
    with pytest.raises(EditError, match="background"):
        editing.inpaint(rep, [0])
    with pytest.raises(EditError, match="no layer"):
        editing.inpaint(rep, [9])


def test_inpaint_never_reads_dropped_codes(rep):
    poisoned = rep.with_codes([rep.codes[0], np.full_like(rep.codes[1], np.nan)])
    out = editing.inpaint(poisoned, [1])
    assert np.all(np.isfinite(out))
    assert np.array_equal(out, editing.inpaint(rep, [1]))
