"""Superpixel segmentation and the neighborhood graph on top of it.

SLIC-style windowed k-means in (L, a, b, x, y) space produces the label
map; from it we extract per-segment pixel lists, the adjacency graph with
boundary pixel bands, the 3-way and 4-way junction sites, and per-segment
color histograms.

Pixel coordinates throughout are (u, v) = (column, row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._kernels import label_components, slic_iterate

__all__ = [
    "ColorHistogram",
    "Segment",
    "NeighborPair",
    "Junction3",
    "Junction4",
    "Segmentation",
    "rgb_to_lab",
    "slic",
    "build_adjacency",
    "color_histograms",
    "chi_squared",
    "dump_segmentation",
]


@dataclass(frozen=True)
class ColorHistogram:
    """64-bin (4x4x4 RGB) normalized color histogram."""

    bins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.float64)
        if b.shape != (64,):
            raise ValueError("histogram must have 64 bins")
        if b.min() < 0 or abs(float(b.sum()) - 1.0) > 1e-9:
            raise ValueError("histogram must be normalized and non-negative")
        object.__setattr__(self, "bins", b)


@dataclass(frozen=True)
class Segment:
    """One superpixel: id, its pixels as an (n, 2) array of (u, v) rows in
    scan order, the arithmetic mean center (c_x, c_y), and its histogram."""

    id: int
    pixels: np.ndarray
    center: np.ndarray
    histogram: ColorHistogram


@dataclass(frozen=True)
class NeighborPair:
    """Adjacent segment pair i < j with its boundary band.

    ``boundary_band`` is an (m, 2) array of (u, v) rows in scan order:
    every pixel within Chebyshev distance 2 of both endpoints of some
    4-adjacency between the segments. ``boundary_length`` counts those
    pixel adjacencies.
    """

    i: int
    j: int
    boundary_band: np.ndarray
    boundary_length: int


@dataclass(frozen=True)
class Junction3:
    """Meeting point of three segments.

    ``segments`` is the quadrant cycle of the detecting 2x2 window,
    rotated so the smallest id comes first; boundary k of ``pairs`` joins
    segments[k] and segments[(k+1) % 3] and indexes the adjacency list.
    ``flips[k]`` says the cycle traverses that stored pair high-id first.
    """

    segments: Tuple[int, int, int]
    pairs: Tuple[int, int, int]
    flips: Tuple[bool, bool, bool]


@dataclass(frozen=True)
class Junction4:
    """Meeting point of four segments, cycle conventions as in Junction3.

    ``orientations[k]`` tags boundary k 'v' when its two segments sit in
    horizontally neighboring quadrants (the label changes across a
    column) and 'h' when vertically.
    """

    segments: Tuple[int, int, int, int]
    pairs: Tuple[int, int, int, int]
    flips: Tuple[bool, bool, bool, bool]
    orientations: Tuple[str, str, str, str]


@dataclass(frozen=True)
class Segmentation:
    """Label map plus everything derived from it."""

    labels: np.ndarray
    segments: Sequence[Segment]
    adjacency: Sequence[NeighborPair]
    junctions3: Sequence[Junction3]
    junctions4: Sequence[Junction4]

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if len(self.segments) != int(self.labels.max()) + 1:
            raise ValueError("segment ids must be dense 0..n-1")


# ---------------------------------------------------------------------------
# color conversions


def _as_rgb_u8(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = np.stack((arr, arr, arr), axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected an (H, W), or (H, W, 3) image")
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype.kind in "ui":
        return np.clip(arr, 0, 255).astype(np.uint8)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def rgb_to_lab(rgb) -> np.ndarray:
    """sRGB (uint8 or float in [0, 1]) to CIELAB under D65."""
    arr = np.asarray(rgb)
    x = arr.astype(np.float64) / 255.0 if arr.dtype.kind in "ui" else arr.astype(np.float64)
    lin = np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)
    m = np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ])
    xyz = lin @ m.T
    xyz = xyz / np.array([0.95047, 1.0, 1.08883])
    delta = 6.0 / 29.0
    f = np.where(xyz > delta ** 3, np.cbrt(xyz), xyz / (3 * delta * delta) + 4.0 / 29.0)
    out = np.empty_like(f)
    out[..., 0] = 116.0 * f[..., 1] - 16.0
    out[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    out[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return out


def chi_squared(h, g) -> float:
    """Chi-squared histogram distance 0.5 * sum (h-g)^2 / (h+g), empty bins
    of both histograms contributing nothing."""
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    s = h + g
    d = h - g
    m = s > 0
    return float(0.5 * np.sum(d[m] * d[m] / s[m]))


def _histograms(rgb_u8: np.ndarray, labels: np.ndarray, n: int) -> list:
    q = rgb_u8 // 64
    bins = q[..., 0].astype(np.int64) * 16 + q[..., 1] * 4 + q[..., 2]
    key = labels.astype(np.int64) * 64 + bins
    counts = np.bincount(key.ravel(), minlength=n * 64).reshape(n, 64).astype(np.float64)
    areas = counts.sum(axis=1, keepdims=True)
    areas[areas == 0] = 1.0
    return [ColorHistogram(row) for row in counts / areas]


def color_histograms(image, segmentation: Segmentation) -> list:
    """Per-segment 64-bin RGB histograms (grayscale inputs are replicated
    across channels)."""
    rgb = _as_rgb_u8(getattr(image, "data", image))
    if rgb.shape[:2] != segmentation.labels.shape:
        raise ValueError("image and segmentation dimensions differ")
    return _histograms(rgb, segmentation.labels, len(segmentation.segments))


# ---------------------------------------------------------------------------
# adjacency graph and junctions


def _band_offsets():
    # pixels within Chebyshev distance 2 of both endpoints of a horizontal
    # adjacency (y, x)-(y, x+1): rows y-2..y+2, cols x-1..x+2
    dys, dxs = np.meshgrid(np.arange(-2, 3), np.arange(-1, 3), indexing="ij")
    return dys.ravel(), dxs.ravel()


_BAND_DY, _BAND_DX = _band_offsets()


def _stamp(ys, xs, h, w, pair_idx, transpose):
    if transpose:
        ay = ys[:, None] + _BAND_DX[None, :]
        ax = xs[:, None] + _BAND_DY[None, :]
    else:
        ay = ys[:, None] + _BAND_DY[None, :]
        ax = xs[:, None] + _BAND_DX[None, :]
    keep = (ay >= 0) & (ay < h) & (ax >= 0) & (ax < w)
    lin = ay * w + ax
    rep = np.broadcast_to(pair_idx[:, None], lin.shape)
    return rep[keep], lin[keep]


def build_adjacency(labels):
    """Extract (adjacency pairs with bands, 3-way junctions, 4-way junctions).

    A NeighborPair exists for every pair of segments sharing a pixel
    4-adjacency; pairs are listed in lexicographic (i, j) order. Junction
    sites come from 2x2 windows: exactly three distinct labels whose equal
    quadrants share a window side give a 3-way junction, four distinct
    labels a 4-way one (windows whose equal quadrants only touch
    diagonally are no junction: no boundary of the window joins them).
    Each distinct segment triple/quadruple is recorded once, at its first
    window in scan order.
    """
    lab = np.asarray(labels)
    if lab.ndim != 2:
        raise ValueError("label map must be 2-D")
    h, w = lab.shape
    lab64 = lab.astype(np.int64)
    n = int(lab64.max()) + 1

    hy, hx = np.nonzero(lab64[:, :-1] != lab64[:, 1:])
    vy, vx = np.nonzero(lab64[:-1, :] != lab64[1:, :])
    ha, hb = lab64[hy, hx], lab64[hy, hx + 1]
    va, vb = lab64[vy, vx], lab64[vy + 1, vx]
    hkey = np.minimum(ha, hb) * n + np.maximum(ha, hb)
    vkey = np.minimum(va, vb) * n + np.maximum(va, vb)
    all_keys = np.concatenate((hkey, vkey))
    if all_keys.size == 0:
        return [], [], []
    pair_keys, inverse = np.unique(all_keys, return_inverse=True)
    lengths = np.bincount(inverse, minlength=pair_keys.size)
    hidx, vidx = inverse[:hkey.size], inverse[hkey.size:]

    rep_h, lin_h = _stamp(hy, hx, h, w, hidx, transpose=False)
    rep_v, lin_v = _stamp(vy, vx, h, w, vidx, transpose=True)
    stamp_key = np.concatenate((rep_h, rep_v)).astype(np.int64) * (h * w) \
        + np.concatenate((lin_h, lin_v))
    stamp_key = np.unique(stamp_key)
    cuts = np.searchsorted(stamp_key, np.arange(pair_keys.size + 1) * (h * w))

    adjacency = []
    for p in range(pair_keys.size):
        lin = stamp_key[cuts[p]:cuts[p + 1]] - p * (h * w)
        band = np.column_stack((lin % w, lin // w)).astype(np.int32)
        adjacency.append(NeighborPair(i=int(pair_keys[p] // n),
                                      j=int(pair_keys[p] % n),
                                      boundary_band=band,
                                      boundary_length=int(lengths[p])))
    pair_index = {(p.i, p.j): k for k, p in enumerate(adjacency)}

    a = lab64[:-1, :-1]
    b = lab64[:-1, 1:]
    c = lab64[1:, :-1]
    d = lab64[1:, 1:]
    eq_ab, eq_cd = a == b, c == d
    eq_ac, eq_bd = a == c, b == d
    eq_ad, eq_bc = a == d, b == c
    n_eq = (eq_ab.astype(np.int8) + eq_cd + eq_ac + eq_bd + eq_ad + eq_bc)
    j3_mask = (n_eq == 1) & (eq_ab | eq_cd | eq_ac | eq_bd)
    j4_mask = n_eq == 0

    def _cycle_at(y, x):
        # clockwise quadrant cycle TL, TR, BR, BL
        return [int(lab64[y, x]), int(lab64[y, x + 1]),
                int(lab64[y + 1, x + 1]), int(lab64[y + 1, x])]

    junctions3 = []
    seen3 = set()
    for y, x in zip(*np.nonzero(j3_mask)):
        cyc = _cycle_at(y, x)
        out = [cyc[k] for k in range(4) if cyc[k] != cyc[(k + 1) % 4]]
        m = out.index(min(out))
        out = out[m:] + out[:m]
        key = tuple(sorted(out))
        if key in seen3:
            continue
        seen3.add(key)
        segs = (out[0], out[1], out[2])
        pairs, flips = [], []
        for k in range(3):
            si, sj = out[k], out[(k + 1) % 3]
            pairs.append(pair_index[(min(si, sj), max(si, sj))])
            flips.append(si > sj)
        junctions3.append(Junction3(segs, tuple(pairs), tuple(flips)))

    junctions4 = []
    seen4 = set()
    orient_base = ("v", "h", "v", "h")
    for y, x in zip(*np.nonzero(j4_mask)):
        cyc = _cycle_at(y, x)
        m = cyc.index(min(cyc))
        out = cyc[m:] + cyc[:m]
        orients = orient_base[m:] + orient_base[:m]
        key = tuple(sorted(out))
        if key in seen4:
            continue
        seen4.add(key)
        pairs, flips = [], []
        for k in range(4):
            si, sj = out[k], out[(k + 1) % 4]
            pairs.append(pair_index[(min(si, sj), max(si, sj))])
            flips.append(si > sj)
        junctions4.append(Junction4(tuple(out), tuple(pairs), tuple(flips), orients))

    return adjacency, junctions3, junctions4


# ---------------------------------------------------------------------------
# SLIC


def _merge_fragments(comp: np.ndarray, nc: int, min_area: float):
    """Absorb small connected components into their largest neighbor until
    none is below min_area. Deterministic: fragments handled in ascending
    id, merges applied through an id-resolution map."""
    while True:
        areas = np.bincount(comp.ravel(), minlength=nc)
        small = np.nonzero((areas > 0) & (areas < min_area))[0]
        if small.size == 0:
            return comp
        ah = np.column_stack((comp[:, :-1].ravel(), comp[:, 1:].ravel()))
        av = np.column_stack((comp[:-1, :].ravel(), comp[1:, :].ravel()))
        edges = np.concatenate((ah, av))
        edges = edges[edges[:, 0] != edges[:, 1]]
        edges = np.unique(np.sort(edges, axis=1), axis=0)
        nbrs = {}
        for u, v in edges:
            nbrs.setdefault(int(u), set()).add(int(v))
            nbrs.setdefault(int(v), set()).add(int(u))
        remap = np.arange(nc)

        def resolve(k):
            while remap[k] != k:
                k = remap[k]
            return k

        areas = areas.astype(np.int64)
        for frag in small:
            frag = int(frag)
            if resolve(frag) != frag:
                continue
            cand = {resolve(nb) for nb in nbrs.get(frag, ())} - {frag}
            if not cand:
                continue
            best = max(sorted(cand), key=lambda k: areas[k])
            areas[best] += areas[frag]
            areas[frag] = 0
            remap[frag] = best
        full = np.array([resolve(k) for k in range(nc)])
        comp = full[comp]


def _dense_relabel(comp: np.ndarray) -> np.ndarray:
    """Renumber to dense 0..n-1 in scan-first-encounter order."""
    flat = comp.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    mapping = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    mapping[uniq[order]] = np.arange(order.size, dtype=np.int32)
    return mapping[comp]


def slic(image, n_target: int, compactness: float = 10.0, iters: int = 10,
         seed: Optional[int] = None) -> Segmentation:
    """Segment an image into roughly ``n_target`` compact superpixels.

    Windowed k-means over (L, a, b, x, y) from a regular seed grid,
    followed by connectivity enforcement: fragments below a quarter of
    the mean segment area are absorbed into their largest neighbor. The
    result is deterministic for identical inputs; ``seed`` is accepted
    for interface stability but unused (no randomized steps). ``n_target``
    is capped at one segment per 16 pixels.
    """
    data = getattr(image, "data", image)
    rgb = _as_rgb_u8(data)
    h, w = rgb.shape[:2]
    n_px = h * w
    if n_px < 64:
        raise ValueError("image too small to segment")
    if n_target < 2:
        raise ValueError("n_target must be at least 2")
    if n_target > n_px:
        raise ValueError("n_target exceeds the pixel count")
    if compactness <= 0:
        raise ValueError("compactness must be positive")
    if iters < 1:
        raise ValueError("iters must be at least 1")

    k = min(int(n_target), n_px // 16)
    nx = min(w, max(1, int(round(math.sqrt(k * w / h)))))
    ny = min(h, max(1, int(round(k / nx))))
    kp = nx * ny

    lab_img = np.ascontiguousarray(rgb_to_lab(rgb))
    centers = np.empty((kp, 5))
    for iy in range(ny):
        for ix in range(nx):
            sx = (ix + 0.5) * w / nx
            sy = (iy + 0.5) * h / ny
            px = min(w - 1, int(round(sx)))
            py = min(h - 1, int(round(sy)))
            centers[iy * nx + ix, 0] = sx
            centers[iy * nx + ix, 1] = sy
            centers[iy * nx + ix, 2:] = lab_img[py, px]

    s = math.sqrt(n_px / kp)
    invwt = (compactness / s) ** 2
    raw = slic_iterate(lab_img, centers, 2.0 * s, invwt, int(iters))

    comp, nc = label_components(raw)
    comp = _merge_fragments(comp, nc, 0.25 * n_px / kp)
    final = _dense_relabel(comp)
    n_segs = int(final.max()) + 1

    adjacency, junctions3, junctions4 = build_adjacency(final)
    hists = _histograms(rgb, final, n_segs)
    segments = []
    for sid in range(n_segs):
        ys, xs = np.nonzero(final == sid)
        pixels = np.column_stack((xs, ys)).astype(np.int32)
        center = np.array([xs.mean(), ys.mean()])
        segments.append(Segment(sid, pixels, center, hists[sid]))
    return Segmentation(final, segments, adjacency, junctions3, junctions4)


def dump_segmentation(segmentation: Segmentation, out_dir: str) -> None:
    """Debug dump: ``labels.png`` (16-bit label map) and ``graph.txt``.

    The text file holds one record per line:
      segment <id> <n_pixels> <c_x> <c_y>
      pair <idx> <i> <j> <boundary_length> <band_pixels>
      junction3 <idx> <s0> <s1> <s2> <p0> <p1> <p2> <f0> <f1> <f2>
      junction4 <idx> <s0..s3> <p0..p3> <f0..f3> <o0..o3>
    """
    import os

    from PIL import Image as PILImage

    os.makedirs(out_dir, exist_ok=True)
    labels = segmentation.labels
    if int(labels.max()) > 65535:
        raise ValueError("too many segments for a 16-bit label dump")
    PILImage.fromarray(labels.astype(np.uint16)).save(os.path.join(out_dir, "labels.png"))

    lines = []
    for s in segmentation.segments:
        lines.append(f"segment {s.id} {len(s.pixels)} {s.center[0]!r} {s.center[1]!r}")
    for k, p in enumerate(segmentation.adjacency):
        lines.append(f"pair {k} {p.i} {p.j} {p.boundary_length} {len(p.boundary_band)}")
    for k, jn in enumerate(segmentation.junctions3):
        segs = " ".join(map(str, jn.segments))
        pairs = " ".join(map(str, jn.pairs))
        flips = " ".join(str(int(f)) for f in jn.flips)
        lines.append(f"junction3 {k} {segs} {pairs} {flips}")
    for k, jn in enumerate(segmentation.junctions4):
        segs = " ".join(map(str, jn.segments))
        pairs = " ".join(map(str, jn.pairs))
        flips = " ".join(str(int(f)) for f in jn.flips)
        orients = " ".join(jn.orientations)
        lines.append(f"junction4 {k} {segs} {pairs} {flips} {orients}")
    with open(os.path.join(out_dir, "graph.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
