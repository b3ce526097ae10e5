"""Slanted-plane MRF for stereo.

Domain types (planes, boundary labels, parameters) plus every potential
function and the total energy. Each segment carries a disparity plane
expressed relative to its own center; each pair of neighboring segments
carries a 4-state boundary label:

    co  -- coplanar, the two planes describe one surface
    hi  -- hinge, the planes fold along the shared boundary
    lo  -- segment i occludes segment j  (for the stored pair i < j)
    ro  -- segment j occludes segment i

Exact-arithmetic contract: every plane is first converted to global
affine coefficients (a, b, c) with d(u, v) = a*u + b*v + c via
``global_coeffs``, and all evaluation goes through the shared kernels in
``_kernels``. The scalar potentials below and the vectorized tables in
``inference.discretize`` therefore produce bit-identical values, and
``total_energy`` documents its accumulation order so it can be checked
against naive re-summation exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ._kernels import pair_min_gaps, plane_mins, quad_forms, tq_sums
from .segmentation import NeighborPair, Segment, Segmentation, chi_squared

if TYPE_CHECKING:  # pragma: no cover
    from .imagery import DisparityImage

__all__ = [
    "BoundaryLabel",
    "Plane",
    "ModelParams",
    "StereoModel",
    "global_coeffs",
    "directed_remap",
    "plane_disparity",
    "truncated_quadratic",
    "phi_seg",
    "phi_bdy1",
    "phi_occ",
    "phi_neg",
    "phi_bdy2",
    "phi_color",
    "phi_junction3",
    "phi_junction4",
    "total_energy",
]


class BoundaryLabel(enum.IntEnum):
    """Occlusion-boundary state of a neighboring segment pair (i, j), i < j.

    At junctions the same four values are read *directionally* relative to
    the junction's cycle order: LO means the earlier segment of the
    boundary is in front, RO the later one (see ``directed_remap``).
    """

    CO = 0
    HI = 1
    LO = 2
    RO = 3


@dataclass(frozen=True)
class Plane:
    """Disparity plane of one segment, anchored at the segment center.

    d(u, v) = alpha*(u - c_x) + beta*(v - c_y) + gamma, so gamma is the
    disparity at the center itself.
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta) and np.isfinite(self.gamma)):
            raise ValueError("plane coefficients must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "Plane":
        a = np.asarray(arr, dtype=np.float64).ravel()
        if a.size != 3:
            raise ValueError("plane array must have 3 entries")
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ModelParams:
    """Potential parameters and the six potential weights."""

    k: float = 5.0
    lambda_occ: float = 15.0
    lambda_hinge: float = 3.0
    lambda_imp: float = 30.0
    lambda_col: float = 30.0
    kappa: float = 60.0
    w_seg: float = 1.0
    w_bdy1: float = 1.0
    w_bdy2: float = 1.0
    w_jct3: float = 1.0
    w_crs4: float = 1.0
    w_col: float = 1.0

    def __post_init__(self):
        vals = [self.k, self.lambda_occ, self.lambda_hinge, self.lambda_imp,
                self.lambda_col, self.kappa, self.w_seg, self.w_bdy1,
                self.w_bdy2, self.w_jct3, self.w_crs4, self.w_col]
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("model parameters must be finite")
        if self.k <= 0:
            raise ValueError("truncation k must be positive")
        if not (self.lambda_occ > self.lambda_hinge > 0):
            raise ValueError("need lambda_occ > lambda_hinge > 0")
        if min(self.lambda_imp, self.lambda_col, self.kappa) < 0:
            raise ValueError("penalty parameters must be non-negative")
        if min(self.w_seg, self.w_bdy1, self.w_bdy2,
               self.w_jct3, self.w_crs4, self.w_col) < 0:
            raise ValueError("potential weights must be non-negative")


def global_coeffs(planes, centers) -> np.ndarray:
    """Convert center-anchored planes to global affine coefficients.

    ``planes`` is (N, 3) rows of (alpha, beta, gamma); ``centers`` is a
    single (c_x, c_y) or an (N, 2) array. Returns (N, 3) rows (a, b, c)
    with d(u, v) = a*u + b*v + c. The conversion is computed as
    ``gamma - alpha*c_x - beta*c_y`` in exactly that order; every plane
    evaluation in the package goes through these coefficients so scalar
    and vectorized paths agree bit for bit.
    """
    arr = np.asarray(planes, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("planes must be an (N, 3) array")
    ctr = np.asarray(centers, dtype=np.float64)
    if ctr.ndim == 1:
        cx, cy = float(ctr[0]), float(ctr[1])
    else:
        cx, cy = ctr[:, 0], ctr[:, 1]
    out = arr.copy()
    out[:, 2] = arr[:, 2] - arr[:, 0] * cx - arr[:, 1] * cy
    return out


# Directed reading of stored labels at a junction. A junction boundary k
# joins cycle segments (s_k, s_{k+1}); when s_k < s_{k+1} the stored label
# already names the earlier segment first and is kept as-is, otherwise
# LO/RO swap.
_DIRECTED_REMAP = np.array([[0, 1, 2, 3], [0, 1, 3, 2]], dtype=np.int64)


def directed_remap(flip: bool) -> np.ndarray:
    """Stored-label -> directed-label permutation for one junction boundary."""
    return _DIRECTED_REMAP[1 if flip else 0].copy()


def plane_disparity(y: Plane, p, c) -> float:
    """Evaluate a plane at pixel p = (u, v) given its center c = (c_x, c_y)."""
    row = global_coeffs(y.as_array()[None, :], c)[0]
    return float(row[0] * float(p[0]) + row[1] * float(p[1]) + row[2])


def truncated_quadratic(d_obs: float, d_hat: float, k: float) -> float:
    """Squared residual clamped at k: min(|d_obs - d_hat|, k)**2."""
    if k <= 0:
        raise ValueError("truncation k must be positive")
    r = abs(float(d_obs) - float(d_hat))
    if r > k:
        r = k
    return r * r


def _pixel_coords(pixels):
    px = np.asarray(pixels)
    return px[:, 0].astype(np.float64), px[:, 1].astype(np.float64)


def _valid_obs(pixels, obs):
    """(u, v, value) arrays for the observed subset of a pixel list."""
    px = np.asarray(pixels)
    m = obs.valid[px[:, 1], px[:, 0]]
    sel = px[m]
    us = sel[:, 0].astype(np.float64)
    vs = sel[:, 1].astype(np.float64)
    vals = obs.values[sel[:, 1], sel[:, 0]].astype(np.float64)
    return us, vs, vals


def _mean_moments(us, vs) -> np.ndarray:
    """Mean second-moment matrix of homogeneous pixel coords (u, v, 1).

    For m = _mean_moments(...) and dq the difference of two planes'
    global coefficients, dq @ m @ dq equals the mean over the pixels of
    the squared disparity difference.
    """
    n = float(us.size)
    if n == 0:
        return np.zeros((3, 3))
    suu = float(np.sum(us * us))
    suv = float(np.sum(us * vs))
    svv = float(np.sum(vs * vs))
    su = float(np.sum(us))
    sv = float(np.sum(vs))
    return np.array([
        [suu / n, suv / n, su / n],
        [suv / n, svv / n, sv / n],
        [su / n, sv / n, 1.0],
    ])


def _row(y: Plane, c) -> np.ndarray:
    return global_coeffs(y.as_array()[None, :], c)


def phi_seg(y: Plane, seg: Segment, obs: "DisparityImage", params: ModelParams) -> float:
    """Data term of one segment: truncated-quadratic residuals against the
    observed disparities inside the segment. Zero when nothing is observed."""
    us, vs, vals = _valid_obs(seg.pixels, obs)
    return float(tq_sums(us, vs, vals, _row(y, seg.center), params.k)[0])


def phi_bdy1(o, y_i: Plane, y_j: Plane, band, obs: "DisparityImage",
             c_i, c_j, params: ModelParams) -> float:
    """Boundary data term: the occluder must explain the observed band.

    lo charges plane i with all observed band pixels, ro plane j; hinge
    and coplanar split the charge evenly between both planes.
    """
    o = BoundaryLabel(int(o))
    us, vs, vals = _valid_obs(band, obs)
    if o == BoundaryLabel.LO:
        return float(tq_sums(us, vs, vals, _row(y_i, c_i), params.k)[0])
    if o == BoundaryLabel.RO:
        return float(tq_sums(us, vs, vals, _row(y_j, c_j), params.k)[0])
    ti = float(tq_sums(us, vs, vals, _row(y_i, c_i), params.k)[0])
    tj = float(tq_sums(us, vs, vals, _row(y_j, c_j), params.k)[0])
    return 0.5 * (ti + tj)


def phi_occ(y_front: Plane, y_back: Plane, band, c_front, c_back,
            params: ModelParams) -> float:
    """Impossibility penalty when the claimed occluder dips behind the
    occluded plane anywhere on the boundary band (plane-only condition)."""
    us, vs = _pixel_coords(band)
    gap = pair_min_gaps(us, vs, _row(y_front, c_front), _row(y_back, c_back))[0, 0]
    return params.lambda_imp if gap < 0.0 else 0.0


def phi_neg(y: Plane, band, c, params: ModelParams) -> float:
    """Impossibility penalty when the plane goes negative on the band."""
    us, vs = _pixel_coords(band)
    return params.lambda_imp if plane_mins(us, vs, _row(y, c))[0] < 0.0 else 0.0


def phi_bdy2(o, y_i: Plane, y_j: Plane, pair: NeighborPair,
             segments: Sequence[Segment], params: ModelParams) -> float:
    """Boundary compatibility term ordering coplanar < hinge < occlusion.

    Occlusion labels pay lambda_occ plus the data-impossibility penalties;
    hinge pays lambda_hinge plus the mean squared plane difference over
    the band; coplanar pays that mean over the union of both segments.
    """
    o = BoundaryLabel(int(o))
    seg_i, seg_j = segments[pair.i], segments[pair.j]
    bus, bvs = _pixel_coords(pair.boundary_band)
    ri = _row(y_i, seg_i.center)
    rj = _row(y_j, seg_j.center)
    negi = params.lambda_imp if plane_mins(bus, bvs, ri)[0] < 0.0 else 0.0
    negj = params.lambda_imp if plane_mins(bus, bvs, rj)[0] < 0.0 else 0.0
    base = negi + negj
    if o == BoundaryLabel.LO:
        occ = params.lambda_imp if pair_min_gaps(bus, bvs, ri, rj)[0, 0] < 0.0 else 0.0
        return (params.lambda_occ + base) + occ
    if o == BoundaryLabel.RO:
        occ = params.lambda_imp if pair_min_gaps(bus, bvs, rj, ri)[0, 0] < 0.0 else 0.0
        return (params.lambda_occ + base) + occ
    if o == BoundaryLabel.HI:
        q = float(quad_forms(ri, rj, _mean_moments(bus, bvs))[0, 0])
        return (params.lambda_hinge + base) + q
    ius, ivs = _pixel_coords(seg_i.pixels)
    jus, jvs = _pixel_coords(seg_j.pixels)
    mom = _mean_moments(np.concatenate((ius, jus)), np.concatenate((ivs, jvs)))
    q = float(quad_forms(ri, rj, mom)[0, 0])
    return base + q


def phi_color(o, h_i, h_j, params: ModelParams) -> float:
    """Color term: coplanar pairs should look alike, everything else pays
    the flat lambda_col."""
    o = BoundaryLabel(int(o))
    if o != BoundaryLabel.CO:
        return params.lambda_col
    bins_i = getattr(h_i, "bins", h_i)
    bins_j = getattr(h_j, "bins", h_j)
    return min(params.kappa * chi_squared(bins_i, bins_j), params.lambda_col)


# ---------------------------------------------------------------------------
# Junction consistency tables.
#
# Labels here are *directed*: LO = the earlier segment of the boundary in
# the junction's cycle order is in front, RO = the later one. The tables
# are generated once from the rule functions below so they stay auditable.

_CO, _HI, _LO, _RO = 0, 1, 2, 3


def _j3_impossible(labs) -> bool:
    occ = [l for l in labs if l in (_LO, _RO)]
    n_occ = len(occ)
    n_co = sum(1 for l in labs if l == _CO)
    n_hi = sum(1 for l in labs if l == _HI)
    if n_occ == 3:
        # a depth cycle: every boundary claims its earlier (or every its
        # later) segment is in front
        return occ[0] == occ[1] == occ[2]
    if n_occ == 2:
        # the co/hinge pair meets at the junction, so the third surface
        # must be on one side of both: same directed letter contradicts
        return occ[0] == occ[1]
    if n_occ == 1 and (n_hi == 2 or n_co == 2):
        # two meets force equal depth all around; no room for a gap
        return True
    if n_co == 2 and n_hi == 1:
        # coplanar twice means one plane; it cannot hinge with itself
        return True
    if n_co == 1 and n_hi == 1 and n_occ == 1:
        # the surface joined by the coplanar boundary may not be the
        # occluder: it would fold over its own attached hinge
        m = next(k for k in range(3) if labs[k] in (_LO, _RO))
        if labs[(m + 2) % 3] == _CO:
            return labs[m] == _LO
        return labs[m] == _RO
    return False


def _j4_valid(labs) -> bool:
    if all(l == _CO for l in labs):
        return True
    ok_pairs = ((_HI, _HI), (_LO, _RO), (_RO, _LO))
    for m in (0, 1):
        if labs[m] == _CO and labs[m + 2] == _CO:
            other = (labs[(m + 1) % 4], labs[(m + 3) % 4])
            if other in ok_pairs:
                return True
    return False


def _build_j3_table() -> np.ndarray:
    bad = np.zeros((4, 4, 4), dtype=bool)
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                bad[l0, l1, l2] = _j3_impossible((l0, l1, l2))
    return bad


def _build_j4_table() -> np.ndarray:
    ok = np.zeros((4, 4, 4, 4), dtype=bool)
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                for l3 in range(4):
                    ok[l0, l1, l2, l3] = _j4_valid((l0, l1, l2, l3))
    return ok


_J3_IMPOSSIBLE = _build_j3_table()
_J4_VALID = _build_j4_table()


def phi_junction3(labels, params: ModelParams) -> float:
    """Consistency penalty of a 3-way junction.

    ``labels`` are the three boundary labels in the junction's cycle
    order, already converted to the directed reading (LO = earlier cycle
    segment in front). Impossible combinations pay lambda_imp.
    """
    l0, l1, l2 = (int(l) for l in labels)
    for l in (l0, l1, l2):
        if not 0 <= l <= 3:
            raise ValueError("boundary labels must be in 0..3")
    return params.lambda_imp if _J3_IMPOSSIBLE[l0, l1, l2] else 0.0


def phi_junction4(labels, orientations, params: ModelParams) -> float:
    """Consistency penalty of a 4-way junction.

    ``labels`` are the four directed labels around the cycle. Valid
    configurations are: all coplanar, or one opposite pair coplanar with
    the other pair a matched-direction occlusion or a double hinge.
    ``orientations`` carries the per-boundary 'h'/'v' tags of the
    junction record; the cycle structure already encodes them (opposite
    boundaries share an orientation), so they do not affect the value.
    """
    l0, l1, l2, l3 = (int(l) for l in labels)
    for l in (l0, l1, l2, l3):
        if not 0 <= l <= 3:
            raise ValueError("boundary labels must be in 0..3")
    if len(orientations) != 4:
        raise ValueError("need one orientation tag per boundary")
    return 0.0 if _J4_VALID[l0, l1, l2, l3] else params.lambda_imp


@dataclass
class StereoModel:
    """Segmentation + sparse observations + parameters, with the derived
    per-segment and per-pair arrays cached for repeated evaluation.

    Treat instances as immutable after construction; all cached state is
    read-only from then on.
    """

    segmentation: Segmentation
    observations: "DisparityImage"
    params: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self):
        seg = self.segmentation
        obs = self.observations
        if obs.values.shape != seg.labels.shape:
            raise ValueError("observation dimensions must match the label map")
        coords = [_pixel_coords(s.pixels) for s in seg.segments]
        self._centers = np.array([s.center for s in seg.segments], dtype=np.float64)
        self._seg_obs = [_valid_obs(s.pixels, obs) for s in seg.segments]
        self._pair_band = []
        self._pair_band_obs = []
        self._pair_band_mom = []
        self._pair_union_mom = []
        chi = np.empty(len(seg.adjacency))
        for idx, pair in enumerate(seg.adjacency):
            bus, bvs = _pixel_coords(pair.boundary_band)
            self._pair_band.append((bus, bvs))
            self._pair_band_obs.append(_valid_obs(pair.boundary_band, obs))
            self._pair_band_mom.append(_mean_moments(bus, bvs))
            ius, ivs = coords[pair.i]
            jus, jvs = coords[pair.j]
            self._pair_union_mom.append(
                _mean_moments(np.concatenate((ius, jus)), np.concatenate((ivs, jvs))))
            chi[idx] = chi_squared(seg.segments[pair.i].histogram.bins,
                                   seg.segments[pair.j].histogram.bins)
        self._pair_chi2 = chi


def _planes_array(planes) -> np.ndarray:
    if isinstance(planes, np.ndarray):
        arr = np.asarray(planes, dtype=np.float64)
    else:
        arr = np.array([(p.alpha, p.beta, p.gamma) for p in planes], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("planes must be (N, 3) or a sequence of Plane")
    return arr


def total_energy(planes, labels, model: StereoModel) -> float:
    """Energy of a complete assignment (lower is better).

    ``planes`` is one Plane (or coefficient row) per segment, ``labels``
    one BoundaryLabel per adjacency pair. The value equals the weighted
    sum of the individual potential calls, accumulated in this exact
    order (part of the contract, so independent re-summation matches bit
    for bit): segments ascending (w_seg * phi_seg), then pairs in
    adjacency order adding w_bdy1 * phi_bdy1, w_bdy2 * phi_bdy2 and
    w_col * phi_color per pair, then 3-way junctions in list order, then
    4-way junctions in list order.
    """
    seg = model.segmentation
    prm = model.params
    arr = _planes_array(planes)
    if arr.shape[0] != len(seg.segments):
        raise ValueError("need exactly one plane per segment")
    labs = np.asarray(labels, dtype=np.int64).ravel()
    if labs.size != len(seg.adjacency):
        raise ValueError("need exactly one label per neighbor pair")
    if labs.size and (labs.min() < 0 or labs.max() > 3):
        raise ValueError("boundary labels must be in 0..3")
    rows = global_coeffs(arr, model._centers)

    e = 0.0
    for i in range(len(seg.segments)):
        us, vs, vals = model._seg_obs[i]
        e += prm.w_seg * float(tq_sums(us, vs, vals, rows[i:i + 1], prm.k)[0])

    for idx, pair in enumerate(seg.adjacency):
        o = int(labs[idx])
        ri = rows[pair.i:pair.i + 1]
        rj = rows[pair.j:pair.j + 1]
        us, vs, vals = model._pair_band_obs[idx]
        if o == BoundaryLabel.LO:
            t1 = float(tq_sums(us, vs, vals, ri, prm.k)[0])
        elif o == BoundaryLabel.RO:
            t1 = float(tq_sums(us, vs, vals, rj, prm.k)[0])
        else:
            ti = float(tq_sums(us, vs, vals, ri, prm.k)[0])
            tj = float(tq_sums(us, vs, vals, rj, prm.k)[0])
            t1 = 0.5 * (ti + tj)
        e += prm.w_bdy1 * t1

        bus, bvs = model._pair_band[idx]
        negi = prm.lambda_imp if plane_mins(bus, bvs, ri)[0] < 0.0 else 0.0
        negj = prm.lambda_imp if plane_mins(bus, bvs, rj)[0] < 0.0 else 0.0
        base = negi + negj
        if o == BoundaryLabel.LO:
            occ = prm.lambda_imp if pair_min_gaps(bus, bvs, ri, rj)[0, 0] < 0.0 else 0.0
            t2 = (prm.lambda_occ + base) + occ
        elif o == BoundaryLabel.RO:
            occ = prm.lambda_imp if pair_min_gaps(bus, bvs, rj, ri)[0, 0] < 0.0 else 0.0
            t2 = (prm.lambda_occ + base) + occ
        elif o == BoundaryLabel.HI:
            t2 = (prm.lambda_hinge + base) + float(
                quad_forms(ri, rj, model._pair_band_mom[idx])[0, 0])
        else:
            t2 = base + float(quad_forms(ri, rj, model._pair_union_mom[idx])[0, 0])
        e += prm.w_bdy2 * t2

        if o == BoundaryLabel.CO:
            c = min(prm.kappa * float(model._pair_chi2[idx]), prm.lambda_col)
        else:
            c = prm.lambda_col
        e += prm.w_col * c

    for jn in seg.junctions3:
        directed = tuple(int(_DIRECTED_REMAP[1 if f else 0][labs[p]])
                         for p, f in zip(jn.pairs, jn.flips))
        e += prm.w_jct3 * phi_junction3(directed, prm)
    for jn in seg.junctions4:
        directed = tuple(int(_DIRECTED_REMAP[1 if f else 0][labs[p]])
                         for p, f in zip(jn.pairs, jn.flips))
        e += prm.w_crs4 * phi_junction4(directed, jn.orientations, prm)
    return float(e)
