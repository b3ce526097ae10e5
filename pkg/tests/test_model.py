"""Potentials, junction tables, and the total energy.

Scalar potential evaluations double as the oracle for the vectorized
energy: ``total_energy`` must equal an explicit re-summation of the
individual calls, bit for bit.
"""

import numpy as np
import pytest

from planestereo.imagery import DisparityImage
from planestereo.model import (BoundaryLabel, ModelParams, Plane, StereoModel,
                               directed_remap, global_coeffs, phi_bdy1,
                               phi_bdy2, phi_color, phi_junction3,
                               phi_junction4, phi_neg, phi_occ, phi_seg,
                               plane_disparity, total_energy,
                               truncated_quadratic)
from planestereo.segmentation import (ColorHistogram, NeighborPair, Segment,
                                      Segmentation, build_adjacency,
                                      chi_squared)

CO, HI, LO, RO = (BoundaryLabel.CO, BoundaryLabel.HI,
                  BoundaryLabel.LO, BoundaryLabel.RO)

_FLAT_HIST = ColorHistogram(np.full(64, 1.0 / 64.0))


def _segment(sid, pixels, hist=_FLAT_HIST):
    px = np.asarray(pixels, np.int32)
    return Segment(sid, px, px.astype(float).mean(axis=0), hist)


def _one_hot(b):
    h = np.zeros(64)
    h[b] = 1.0
    return ColorHistogram(h)


# ---------------------------------------------------------------------------
# plane evaluation and the truncated quadratic


def test_plane_at_center_is_gamma():
    assert plane_disparity(Plane(0, 0, 10), (7, 3), (7, 3)) == 10.0


def test_plane_affine_evaluation():
    y = Plane(0.5, -0.25, 12.0)
    assert plane_disparity(y, (104, 96), (100, 100)) == 15.0


def test_zero_plane():
    for p in ((0, 0), (55, 2), (3, 99)):
        assert plane_disparity(Plane(0, 0, 0), p, (10, 10)) == 0.0


def test_plane_validation_and_round_trip():
    with pytest.raises(ValueError):
        Plane(np.nan, 0.0, 1.0)
    with pytest.raises(ValueError):
        Plane(0.0, np.inf, 1.0)
    y = Plane(0.25, -1.5, 9.0)
    assert Plane.from_array(y.as_array()) == y


def test_truncated_quadratic_examples():
    assert truncated_quadratic(7.0, 5.0, 5.0) == 4.0
    assert truncated_quadratic(14.0, 5.0, 5.0) == 25.0
    assert truncated_quadratic(3.0, 3.0, 5.0) == 0.0


def test_truncated_quadratic_randomized():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.normal(0, 10, 2)
        k = rng.uniform(0.1, 8)
        assert truncated_quadratic(a, b, k) == min(abs(a - b), k) ** 2
    with pytest.raises(ValueError):
        truncated_quadratic(1.0, 2.0, 0.0)


def test_global_coeffs_matches_anchored_form():
    rng = np.random.default_rng(1)
    planes = rng.normal(0, 2, (10, 3))
    centers = rng.uniform(0, 50, (10, 2))
    rows = global_coeffs(planes, centers)
    for i in range(10):
        u, v = rng.uniform(0, 50, 2)
        direct = (planes[i, 0] * (u - centers[i, 0])
                  + planes[i, 1] * (v - centers[i, 1]) + planes[i, 2])
        via_row = rows[i, 0] * u + rows[i, 1] * v + rows[i, 2]
        assert via_row == pytest.approx(direct, abs=1e-9)
        # the scalar evaluator uses the same conversion, bit for bit
        assert plane_disparity(Plane(*planes[i]), (u, v), centers[i]) \
            == via_row


# ---------------------------------------------------------------------------
# data potentials


def _obs(shape, entries):
    vals = np.zeros(shape)
    valid = np.zeros(shape, bool)
    for (u, v), d in entries:
        vals[v, u] = d
        valid[v, u] = True
    return DisparityImage(vals, valid)


def test_phi_seg_exact_fit_is_zero():
    seg = _segment(0, [(0, 0), (1, 0), (2, 1)])
    y = Plane(0.5, 1.0, 3.0)
    entries = [((u, v), plane_disparity(y, (u, v), seg.center))
               for u, v in seg.pixels]
    assert phi_seg(y, seg, _obs((4, 4), entries), ModelParams()) == 0.0


def test_phi_seg_empty_observed_set():
    seg = _segment(0, [(0, 0), (1, 1)])
    obs = _obs((4, 4), [((3, 3), 7.0)])  # valid pixel outside the segment
    assert phi_seg(Plane(1, 1, 1), seg, obs, ModelParams()) == 0.0


def test_phi_seg_truncated_residuals():
    seg = _segment(0, [(0, 0), (1, 0), (2, 0)])
    obs = _obs((2, 4), [((0, 0), 1.0), ((1, 0), 2.0), ((2, 0), 7.0)])
    y = Plane(0, 0, 0)  # residuals are the raw observations
    assert phi_seg(y, seg, obs, ModelParams(k=5.0)) == 30.0  # 1 + 4 + 25


def test_phi_seg_monotone_and_bounded():
    rng = np.random.default_rng(2)
    params = ModelParams()
    seg = _segment(0, [(u, v) for u in range(4) for v in range(4)])
    for _ in range(20):
        entries = [((int(u), int(v)), float(rng.uniform(0, 20)))
                   for u, v in seg.pixels[rng.random(16) < 0.7]]
        obs = _obs((4, 4), entries)
        y = Plane(*rng.normal(0, 3, 3))
        cost = phi_seg(y, seg, obs, params)
        assert 0.0 <= cost <= len(entries) * params.k ** 2


def test_phi_bdy1_occluder_explains_band():
    band = [(2, 1), (2, 2), (3, 1)]
    y_i = Plane(0.5, -0.5, 4.0)
    y_j = Plane(0.0, 0.0, 50.0)
    c_i, c_j = (1.0, 1.0), (4.0, 2.0)
    entries = [((u, v), plane_disparity(y_i, (u, v), c_i)) for u, v in band]
    obs = _obs((5, 5), entries)
    params = ModelParams()
    assert phi_bdy1(LO, y_i, y_j, np.array(band), obs, c_i, c_j, params) == 0.0
    # with identical planes the split charge is zero too
    assert phi_bdy1(CO, y_i, y_i, np.array(band), obs, c_i, c_i, params) == 0.0


def test_phi_bdy1_single_pixel_hinge():
    band = np.array([(2, 2)])
    obs = _obs((4, 4), [((2, 2), 10.0)])
    y_i = Plane(0, 0, 9.0)   # residual 1
    y_j = Plane(0, 0, 13.0)  # residual 3
    c = (2.0, 2.0)
    got = phi_bdy1(HI, y_i, y_j, band, obs, c, c, ModelParams(k=5.0))
    assert got == 5.0  # (1 + 9) / 2


def test_phi_bdy1_exchange_symmetry():
    rng = np.random.default_rng(3)
    params = ModelParams()
    for _ in range(20):
        band = np.column_stack((rng.integers(0, 6, 5), rng.integers(0, 6, 5)))
        entries = [((int(u), int(v)), float(rng.uniform(0, 10)))
                   for u, v in band[:3]]
        obs = _obs((6, 6), entries)
        y_a, y_b = Plane(*rng.normal(0, 1, 3)), Plane(*rng.normal(0, 1, 3))
        c_a, c_b = rng.uniform(0, 5, 2), rng.uniform(0, 5, 2)
        assert phi_bdy1(LO, y_a, y_b, band, obs, c_a, c_b, params) \
            == phi_bdy1(RO, y_b, y_a, band, obs, c_b, c_a, params)


def test_phi_occ():
    band = np.array([(u, v) for u in range(3) for v in range(3)])
    params = ModelParams()
    front = Plane(0, 0, 10.0)
    back = Plane(0, 0, 5.0)
    c = (1.0, 1.0)
    assert phi_occ(front, back, band, c, c, params) == 0.0
    assert phi_occ(back, front, band, c, c, params) == 30.0
    # strict inequality: equal planes are no violation
    assert phi_occ(front, front, band, c, c, params) == 0.0


def test_phi_neg():
    band = np.array([(u, 0) for u in range(8)])
    params = ModelParams()
    assert phi_neg(Plane(0, 0, 1.0), band, (0.0, 0.0), params) == 0.0
    assert phi_neg(Plane(0, 0, -1.0), band, (0.0, 0.0), params) == 30.0
    # tilted plane dipping below zero inside the band
    tilted = Plane(-1.0, 0.0, 3.0)  # d(u) = 3 - u < 0 for u >= 4
    assert phi_neg(tilted, band, (0.0, 0.0), params) == 30.0


def _pair_fixture():
    seg_i = _segment(0, [(u, v) for u in range(3) for v in range(4)])
    seg_j = _segment(1, [(u, v) for u in range(3, 6) for v in range(4)])
    band = np.array([(u, v) for u in range(1, 5) for v in range(4)], np.int32)
    pair = NeighborPair(0, 1, band, boundary_length=4)
    return seg_i, seg_j, pair


def test_phi_bdy2_examples():
    seg_i, seg_j, pair = _pair_fixture()
    params = ModelParams()
    # a fronto-parallel plane is the same surface regardless of which
    # segment center it is anchored at: coplanar free, hinge pays its prior
    same = Plane(0.0, 0.0, 7.0)
    assert phi_bdy2(CO, same, same, pair, [seg_i, seg_j], params) \
        == pytest.approx(0.0, abs=1e-12)
    assert phi_bdy2(HI, same, same, pair, [seg_i, seg_j], params) \
        == pytest.approx(3.0, abs=1e-12)
    # front uniformly above back: occlusion pays exactly its prior
    y_i, y_j = Plane(0, 0, 10.0), Plane(0, 0, 5.0)
    assert phi_bdy2(LO, y_i, y_j, pair, [seg_i, seg_j], params) == 15.0
    # claiming the far plane as occluder adds the impossibility penalty
    assert phi_bdy2(RO, y_i, y_j, pair, [seg_i, seg_j], params) == 45.0


def test_phi_bdy2_preference_ordering():
    # equal non-negative planes: coplanar <= hinge <= occlusion
    seg_i, seg_j, pair = _pair_fixture()
    params = ModelParams()
    rng = np.random.default_rng(4)
    for _ in range(20):
        y = Plane(*rng.uniform(0, 0.2, 2), rng.uniform(5, 20))
        costs = [phi_bdy2(o, y, y, pair, [seg_i, seg_j], params)
                 for o in (CO, HI, LO)]
        assert costs[0] <= costs[1] <= costs[2]


def test_phi_bdy2_exchange_symmetry():
    seg_i, seg_j, pair = _pair_fixture()
    params = ModelParams()
    rng = np.random.default_rng(5)
    for _ in range(10):
        y_a = Plane(*rng.normal(0, 0.5, 2), rng.uniform(0, 15))
        y_b = Plane(*rng.normal(0, 0.5, 2), rng.uniform(0, 15))
        swapped_i = _segment(0, seg_j.pixels)
        swapped_j = _segment(1, seg_i.pixels)
        assert phi_bdy2(LO, y_a, y_b, pair, [seg_i, seg_j], params) \
            == phi_bdy2(RO, y_b, y_a, pair, [swapped_i, swapped_j], params)


def test_phi_bdy2_hinge_mean_band_misfit():
    # two planes meeting exactly on the band midline: the hinge surcharge
    # is the mean squared gap over the whole band
    seg_i, seg_j, pair = _pair_fixture()
    params = ModelParams()
    y_i = Plane(1.0, 0.0, 10.0)
    y_j = Plane(-1.0, 0.0, 10.0)
    rows = global_coeffs(
        np.array([y_i.as_array(), y_j.as_array()]),
        np.array([seg_i.center, seg_j.center]))
    us = pair.boundary_band[:, 0].astype(float)
    vs = pair.boundary_band[:, 1].astype(float)
    gaps = (rows[0, 0] - rows[1, 0]) * us + (rows[0, 1] - rows[1, 1]) * vs \
        + (rows[0, 2] - rows[1, 2])
    want = params.lambda_hinge + np.mean(gaps ** 2)
    got = phi_bdy2(HI, y_i, y_j, pair, [seg_i, seg_j], params)
    assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# color


def test_phi_color():
    params = ModelParams()
    h = _one_hot(5)
    g = _one_hot(9)
    assert phi_color(CO, h, h, params) == 0.0
    assert phi_color(HI, h, g, params) == 30.0
    assert phi_color(LO, h, h, params) == 30.0
    # disjoint histograms: chi-squared is 1, capped at lambda_col
    assert chi_squared(h.bins, g.bins) == 1.0
    assert phi_color(CO, h, g, params) == 30.0


def test_phi_color_uses_kappa_scale():
    params = ModelParams(kappa=10.0)
    h = _one_hot(5)
    g = _one_hot(9)
    assert phi_color(CO, h, g, params) == 10.0


# ---------------------------------------------------------------------------
# junctions


def test_junction3_examples():
    params = ModelParams()
    assert phi_junction3((LO, LO, LO), params) == 30.0  # cyclic occlusion
    assert phi_junction3((RO, RO, RO), params) == 30.0
    assert phi_junction3((CO, CO, CO), params) == 0.0
    for rot in ((CO, CO, HI), (CO, HI, CO), (HI, CO, CO)):
        assert phi_junction3(rot, params) == 30.0


def test_junction3_cyclic_invariance_and_count():
    params = ModelParams()
    bad = 0
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                v = phi_junction3((l0, l1, l2), params)
                assert v == phi_junction3((l1, l2, l0), params)
                assert v == phi_junction3((l2, l0, l1), params)
                bad += v > 0
    assert bad == 35


def test_junction3_consistent_cases():
    params = ModelParams()
    # two occlusions with a coplanar/hinge third: the directed letters
    # must oppose (the joined surface is in front of the lone one twice)
    assert phi_junction3((LO, LO, CO), params) == 30.0
    assert phi_junction3((LO, RO, CO), params) == 0.0
    assert phi_junction3((LO, LO, HI), params) == 30.0
    assert phi_junction3((LO, RO, HI), params) == 0.0
    # two hinges and a coplanar boundary form a legal double crease
    assert phi_junction3((HI, HI, CO), params) == 0.0
    assert phi_junction3((HI, HI, HI), params) == 0.0


def test_junction3_coplanar_side_may_not_occlude():
    # with one each of co/hi/occ, the surface attached through the
    # coplanar boundary cannot be the occluder
    params = ModelParams()
    assert phi_junction3((LO, HI, CO), params) == 30.0
    assert phi_junction3((RO, HI, CO), params) == 0.0
    assert phi_junction3((RO, CO, HI), params) == 30.0
    assert phi_junction3((LO, CO, HI), params) == 0.0


def test_junction4_examples():
    params = ModelParams()
    o = ("v", "h", "v", "h")
    assert phi_junction4((CO, CO, CO, CO), o, params) == 0.0
    assert phi_junction4((CO, HI, CO, HI), o, params) == 0.0
    assert phi_junction4((HI, CO, HI, CO), o, params) == 0.0
    assert phi_junction4((HI, HI, HI, HI), o, params) == 30.0


def test_junction4_direction_consistency_and_count():
    params = ModelParams()
    o = ("v", "h", "v", "h")
    # occlusion crossing a coplanar pair: directions must match up
    assert phi_junction4((CO, LO, CO, RO), o, params) == 0.0
    assert phi_junction4((CO, RO, CO, LO), o, params) == 0.0
    assert phi_junction4((CO, LO, CO, LO), o, params) == 30.0
    valid = 0
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                for l3 in range(4):
                    valid += phi_junction4((l0, l1, l2, l3), o, params) == 0.0
    assert valid == 7


def test_junction_label_validation():
    params = ModelParams()
    with pytest.raises(ValueError):
        phi_junction3((0, 1, 7), params)
    with pytest.raises(ValueError):
        phi_junction4((0, 0, 0, 0), ("v", "h"), params)


def test_directed_remap():
    np.testing.assert_array_equal(directed_remap(False), [0, 1, 2, 3])
    np.testing.assert_array_equal(directed_remap(True), [0, 1, 3, 2])


# ---------------------------------------------------------------------------
# parameters


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(k=0.0)
    with pytest.raises(ValueError):
        ModelParams(lambda_occ=2.0, lambda_hinge=3.0)
    with pytest.raises(ValueError):
        ModelParams(lambda_hinge=0.0)
    with pytest.raises(ValueError):
        ModelParams(w_seg=-1.0)
    with pytest.raises(ValueError):
        ModelParams(kappa=np.inf)


# ---------------------------------------------------------------------------
# total energy


def _voronoi_labels(rng, h, w, n):
    pts = np.column_stack((rng.uniform(0, w, n), rng.uniform(0, h, n)))
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    d = (uu[..., None] - pts[:, 0]) ** 2 + (vv[..., None] - pts[:, 1]) ** 2
    lab = np.argmin(d, axis=-1)
    # drop empty cells so ids stay dense
    uniq, lab = np.unique(lab, return_inverse=True)
    return lab.reshape(h, w).astype(np.int32)


def _random_model(rng, h=14, w=18, n=6):
    labels = _voronoi_labels(rng, h, w, n)
    adjacency, j3, j4 = build_adjacency(labels)
    segments = []
    for sid in range(labels.max() + 1):
        ys, xs = np.nonzero(labels == sid)
        hist = rng.random(64)
        segments.append(Segment(sid, np.column_stack((xs, ys)).astype(np.int32),
                                np.array([xs.mean(), ys.mean()]),
                                ColorHistogram(hist / hist.sum())))
    seg = Segmentation(labels, segments, adjacency, j3, j4)
    vals = rng.uniform(0, 25, (h, w))
    valid = rng.random((h, w)) < 0.6
    obs = DisparityImage(np.where(valid, vals, 0.0), valid)
    return StereoModel(seg, obs, ModelParams())


def _naive_energy(planes, labels, model):
    seg = model.segmentation
    prm = model.params
    obs = model.observations
    e = 0.0
    for s in seg.segments:
        e += prm.w_seg * phi_seg(planes[s.id], s, obs, prm)
    for idx, pair in enumerate(seg.adjacency):
        y_i, y_j = planes[pair.i], planes[pair.j]
        c_i = seg.segments[pair.i].center
        c_j = seg.segments[pair.j].center
        e += prm.w_bdy1 * phi_bdy1(labels[idx], y_i, y_j, pair.boundary_band,
                                   obs, c_i, c_j, prm)
        e += prm.w_bdy2 * phi_bdy2(labels[idx], y_i, y_j, pair,
                                   seg.segments, prm)
        e += prm.w_col * phi_color(labels[idx],
                                   seg.segments[pair.i].histogram,
                                   seg.segments[pair.j].histogram, prm)
    for jn in seg.junctions3:
        directed = tuple(int(directed_remap(f)[int(labels[p])])
                         for p, f in zip(jn.pairs, jn.flips))
        e += prm.w_jct3 * phi_junction3(directed, prm)
    for jn in seg.junctions4:
        directed = tuple(int(directed_remap(f)[int(labels[p])])
                         for p, f in zip(jn.pairs, jn.flips))
        e += prm.w_crs4 * phi_junction4(directed, jn.orientations, prm)
    return e


def test_total_energy_single_segment_exact_fit():
    labels = np.zeros((6, 6), np.int32)
    adjacency, j3, j4 = build_adjacency(labels)
    ys, xs = np.nonzero(labels == 0)
    seg = Segmentation(labels, [
        Segment(0, np.column_stack((xs, ys)).astype(np.int32),
                np.array([xs.mean(), ys.mean()]), _FLAT_HIST)],
        adjacency, j3, j4)
    y = Plane(0.5, 0.25, 8.0)
    vals = np.empty((6, 6))
    for v in range(6):
        for u in range(6):
            vals[v, u] = plane_disparity(y, (u, v), seg.segments[0].center)
    model = StereoModel(seg, DisparityImage(vals, np.ones((6, 6), bool)))
    assert total_energy([y], [], model) == 0.0


def test_total_energy_two_coplanar_segments():
    labels = np.zeros((6, 8), np.int32)
    labels[:, 4:] = 1
    adjacency, j3, j4 = build_adjacency(labels)
    segments = []
    for sid in (0, 1):
        ys, xs = np.nonzero(labels == sid)
        segments.append(Segment(sid, np.column_stack((xs, ys)).astype(np.int32),
                                np.array([xs.mean(), ys.mean()]), _FLAT_HIST))
    seg = Segmentation(labels, segments, adjacency, j3, j4)
    # one shared physical plane, expressed per segment about each center
    a, b = 0.25, -0.125
    base = 10.0
    planes = [Plane(a, b, base + a * s.center[0] + b * s.center[1])
              for s in segments]
    vals = a * np.arange(8)[None, :] + b * np.arange(6)[:, None] + base
    model = StereoModel(seg, DisparityImage(vals, np.ones((6, 6 + 2), bool)))
    assert total_energy(planes, [CO], model) == pytest.approx(0.0, abs=1e-18)
    assert total_energy(planes, [HI], model) > 0.0


def test_total_energy_matches_naive_resummation():
    rng = np.random.default_rng(6)
    for _ in range(10):
        model = _random_model(rng)
        n_seg = len(model.segmentation.segments)
        n_pair = len(model.segmentation.adjacency)
        planes = [Plane(*rng.normal(0, 0.4, 2), rng.uniform(-2, 20))
                  for _ in range(n_seg)]
        labels = rng.integers(0, 4, n_pair)
        assert total_energy(planes, labels, model) \
            == _naive_energy(planes, labels, model)


def test_total_energy_validates_assignment():
    rng = np.random.default_rng(7)
    model = _random_model(rng)
    n_seg = len(model.segmentation.segments)
    n_pair = len(model.segmentation.adjacency)
    planes = [Plane(0, 0, 1.0)] * n_seg
    with pytest.raises(ValueError):
        total_energy(planes[:-1], np.zeros(n_pair, np.int64), model)
    with pytest.raises(ValueError):
        total_energy(planes, np.zeros(n_pair + 1, np.int64), model)
    with pytest.raises(ValueError):
        total_energy(planes, np.full(n_pair, 4, np.int64), model)


def test_stereo_model_validates_shapes():
    labels = np.zeros((4, 4), np.int32)
    adjacency, j3, j4 = build_adjacency(labels)
    ys, xs = np.nonzero(labels == 0)
    seg = Segmentation(labels, [
        Segment(0, np.column_stack((xs, ys)).astype(np.int32),
                np.array([xs.mean(), ys.mean()]), _FLAT_HIST)],
        adjacency, j3, j4)
    with pytest.raises(ValueError):
        StereoModel(seg, DisparityImage(np.zeros((5, 4)),
                                        np.zeros((5, 4), bool)))
