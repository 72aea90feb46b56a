import numpy as np
import pytest

from oracles import dense_conv_at_sites, fb_reference
from vfuse.fbfusion import (ScoreWeights, assemble_dense_foreground, expand_and_discard, fb_fuse,
                            init_fb_parameters, score_importance, split_foreground_background,
                            submanifold_conv)
from vfuse.p2fusion import SafParameters
from vfuse.voxelgrid import SparseVoxelTensor, VoxelGridSpec, neighbor_offsets


def random_tensor(seed, side=8, occupancy=0.3, c=4):
    rng = np.random.default_rng(seed)
    spec = VoxelGridSpec((1, 1, 1), (0, 0, 0), (side, side, side))
    cells = np.argwhere(rng.random((side, side, side)) < occupancy)
    rng.shuffle(cells)
    return SparseVoxelTensor(cells, rng.normal(size=(len(cells), c)), spec)


def test_zero_weights_give_half():
    t = random_tensor(0)
    s = score_importance(t, ScoreWeights.zeros(3, 4))
    assert s.raw.shape == (len(t), 27)
    assert np.all(s.raw == 0.5)


@pytest.mark.parametrize("seed,occ,k_s", [(1, 0.1, 3), (2, 0.3, 3), (3, 0.5, 3), (4, 0.25, 5)])
def test_submanifold_matches_dense(seed, occ, k_s):
    t = random_tensor(seed, occupancy=occ)
    w = ScoreWeights.init(k_s, 4, seed=seed)
    got = submanifold_conv(t, w)
    want = dense_conv_at_sites(t.indices, t.features, t.spec.extents, w.weight, w.bias, k_s)
    assert np.max(np.abs(got - want)) < 1e-12


def test_scores_strictly_inside_unit_interval():
    t = random_tensor(5)
    w = ScoreWeights.init(3, 4, seed=1, gain=1e4)
    s = score_importance(t, w).raw
    assert np.all(s > 0) and np.all(s < 1)


def test_channel_order():
    t = random_tensor(6)
    w = ScoreWeights.init(3, 4, seed=2)
    last = score_importance(t, w)
    first = score_importance(t, w, fore_first=True)
    assert np.array_equal(last.fore, last.raw[:, 26])
    assert np.array_equal(first.fore, first.raw[:, 0])
    assert last.expand.shape == first.expand.shape == (len(t), 26)


def test_split_partition_and_strictness():
    t = random_tensor(7)
    w = ScoreWeights.zeros(3, 4)
    s = score_importance(t, w)
    split = split_foreground_background(t, s, 0.5)
    # scores equal to the threshold are background
    assert split.alpha == 0 and split.beta == len(t)
    s.raw[:4, -1] = 0.9
    split = split_foreground_background(t, s, 0.5)
    assert split.fore_rows.tolist() == [0, 1, 2, 3]
    assert split.alpha + split.beta == len(t)


def test_expansion_enumeration():
    spec = VoxelGridSpec((1, 1, 1), (0, 0, 0), (5, 5, 5))
    t = SparseVoxelTensor([[0, 0, 0], [2, 2, 2]], np.array([[1.0, 2.0], [3.0, 4.0]]), spec)
    s = score_importance(t, ScoreWeights.zeros(3, 2))
    s.raw[:, :] = 0.9
    split = split_foreground_background(t, s, 0.5)
    ex = expand_and_discard(t, split, s, 3, 0.5)
    # voxel at the corner keeps only its 7 in-grid neighbors
    assert np.sum(ex.source == 0) == 7
    assert np.sum(ex.source == 1) == 26
    offs = neighbor_offsets(3)
    assert np.array_equal(ex.targets, t.indices[ex.source] + offs[ex.offset_id])
    assert np.allclose(ex.features, t.features[ex.source] * 0.9)


def test_assembly_collisions():
    spec = VoxelGridSpec((1, 1, 1), (0, 0, 0), (6, 6, 6))
    # two foreground voxels two cells apart share neighbor (2, 1, 1); (3, 1, 1) is occupied
    t = SparseVoxelTensor([[1, 1, 1], [3, 1, 1]], np.array([[2.0], [6.0]]), spec)
    s = score_importance(t, ScoreWeights.zeros(3, 1))
    s.raw[:] = 0.1
    s.raw[:, -1] = 0.9
    offs = neighbor_offsets(3).tolist()
    s.raw[0, offs.index([1, 0, 0])] = 0.8
    s.raw[1, offs.index([-1, 0, 0])] = 0.6
    split = split_foreground_background(t, s, 0.5)
    ex = expand_and_discard(t, split, s, 3, 0.5)
    dense = assemble_dense_foreground(t, split, ex)
    assert dense.indices.tolist() == [[2, 1, 1], [1, 1, 1], [3, 1, 1]]
    assert np.allclose(dense.features[0], [(2.0 * 0.8 + 6.0 * 0.6) / 2])


def test_assembly_drops_hits_on_background():
    spec = VoxelGridSpec((1, 1, 1), (0, 0, 0), (4, 4, 4))
    t = SparseVoxelTensor([[1, 1, 1], [1, 1, 2]], np.array([[1.0], [5.0]]), spec)
    s = score_importance(t, ScoreWeights.zeros(3, 1))
    s.raw[0] = 0.9
    s.raw[1] = 0.1
    split = split_foreground_background(t, s, 0.5)
    dense = assemble_dense_foreground(t, split, expand_and_discard(t, split, s, 3, 0.5))
    assert [1, 1, 2] not in dense.indices.tolist()
    assert len(dense) == 1 + 26 - 1


def test_fb_fuse_matches_reference():
    for seed in range(5):
        t = random_tensor(100 + seed, occupancy=0.15, c=4)
        score, saf = init_fb_parameters(3, 4, seed, gain=8.0)
        res = fb_fuse(t, saf, score, threshold=0.5, chunk=32)
        idx, feat, alpha, beta, expanded = fb_reference(
            t.indices, t.features, t.spec.extents, score.weight, score.bias, 3, saf, 0.5, chunk=32)
        assert np.array_equal(res.output.indices, idx)
        assert np.max(np.abs(res.output.features - feat)) < 1e-9
        assert (res.split.alpha, res.split.beta, len(res.expansion)) == (alpha, beta, expanded)


def test_fb_fuse_fore_first_matches_reference():
    t = random_tensor(200, occupancy=0.15)
    score, saf = init_fb_parameters(3, 4, 1, gain=8.0)
    res = fb_fuse(t, saf, score, threshold=0.4, fore_first=True)
    idx, feat, *_ = fb_reference(t.indices, t.features, t.spec.extents, score.weight, score.bias,
                                 3, saf, 0.4, fore_first=True)
    assert np.array_equal(res.output.indices, idx)
    assert np.max(np.abs(res.output.features - feat)) < 1e-9


def test_threshold_monotonicity():
    t = random_tensor(9, occupancy=0.2)
    score, saf = init_fb_parameters(3, 4, 3, gain=8.0)
    rows = [fb_fuse(t, saf, score, threshold=th).summary() for th in np.linspace(0.1, 0.9, 9)]
    alphas = [r["alpha"] for r in rows]
    expanded = [r["expanded"] for r in rows]
    assert all(a >= b for a, b in zip(alphas, alphas[1:]))
    assert all(a >= b for a, b in zip(expanded, expanded[1:]))
    assert all(r["alpha"] + r["beta"] == len(t) for r in rows)


def test_empty_tensor():
    spec = VoxelGridSpec((1, 1, 1), (0, 0, 0), (4, 4, 4))
    t = SparseVoxelTensor(np.zeros((0, 3)), np.zeros((0, 4)), spec)
    score, saf = init_fb_parameters(3, 4, 0)
    res = fb_fuse(t, saf, score)
    assert len(res.output) == 0


def test_rejects_wrong_k():
    t = random_tensor(0)
    score, _ = init_fb_parameters(3, 4, 0)
    with pytest.raises(ValueError):
        fb_fuse(t, SafParameters.init(9, 4), score)


def test_expansion_bounded_and_output_unique():
    t = random_tensor(12, occupancy=0.25)
    score, saf = init_fb_parameters(3, 4, 5, gain=8.0)
    res = fb_fuse(t, saf, score, threshold=0.3)
    ex = res.expansion
    assert len(ex) > 0
    assert np.all(np.abs(ex.features) <= np.abs(t.features[ex.source]))
    assert len(np.unique(res.output.indices, axis=0)) == len(res.output)
    assert res.split.alpha + res.split.beta == len(t)


def test_no_expansion_keeps_foreground():
    t = random_tensor(13)
    s = score_importance(t, ScoreWeights.zeros(3, 4))
    s.raw[:, -1] = 0.9
    split = split_foreground_background(t, s, 0.5)
    ex = expand_and_discard(t, split, s, 3, 0.5)
    dense = assemble_dense_foreground(t, split, ex)
    assert len(ex) == 0
    assert np.array_equal(dense.indices, t.indices[split.fore_rows])
