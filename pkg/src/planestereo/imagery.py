"""Image and disparity I/O plus the synthetic piecewise-planar scene maker.

Disparity containers follow the two dataset conventions: 16-bit PNG
storing value/256 with 0 meaning invalid, and PFM storing float32 where
non-positive or non-finite means invalid. In memory a disparity map is
always a float array plus an explicit validity mask — never a sentinel.

Neither container can represent a *valid* disparity of exactly zero:
png16 bumps such pixels to 1 (error 1/256, inside the stated round-trip
bound), pfm reloads them as invalid.
"""

from __future__ import annotations

import colorsys
import enum
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from ._kernels import occlusion_scan
from .model import Plane

__all__ = [
    "ImageryError",
    "MissingFileError",
    "UnsupportedFormatError",
    "CorruptDataError",
    "FormatMismatchError",
    "DimensionOverflowError",
    "DisparityRangeError",
    "SynthesisError",
    "OcclusionState",
    "Image",
    "DisparityImage",
    "GroundTruth",
    "SynthConfig",
    "SyntheticScene",
    "load_image",
    "save_image",
    "load_disparity",
    "save_disparity",
    "generate_synthetic",
    "save_scene",
    "load_scene",
]

_MAX_PIXELS = 10 ** 8


class ImageryError(Exception):
    """Base class for all I/O and synthesis errors of this module."""


class MissingFileError(ImageryError):
    pass


class UnsupportedFormatError(ImageryError):
    pass


class CorruptDataError(ImageryError):
    pass


class FormatMismatchError(ImageryError):
    pass


class DimensionOverflowError(ImageryError):
    pass


class DisparityRangeError(ImageryError):
    pass


class SynthesisError(ImageryError):
    pass


class OcclusionState(enum.IntEnum):
    """Mask byte values, identical in memory and in mask.png files."""

    UNKNOWN = 0
    OCCLUDED = 128
    NON_OCCLUDED = 255


@dataclass(frozen=True)
class Image:
    """8-bit raster: (H, W) grayscale or (H, W, 3) RGB, row-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise ValueError("image data must be uint8")
        if arr.ndim == 3 and arr.shape[2] != 3:
            raise ValueError("color images must have 3 channels")
        if arr.ndim not in (2, 3):
            raise ValueError("image data must be (H, W) or (H, W, 3)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3


@dataclass(frozen=True)
class DisparityImage:
    """Per-pixel disparities with an explicit validity mask.

    ``values`` is float64 (H, W) and holds 0.0 wherever ``valid`` is
    False; valid entries are finite and non-negative.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.valid, dtype=bool)
        if vals.ndim != 2 or vals.shape != mask.shape:
            raise ValueError("values and valid must be matching 2-D arrays")
        sel = vals[mask]
        if sel.size and (not np.isfinite(sel).all() or sel.min() < 0):
            raise ValueError("valid disparities must be finite and non-negative")
        object.__setattr__(self, "values", np.where(mask, vals, 0.0))
        object.__setattr__(self, "valid", mask)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GroundTruth:
    """Reference disparity plus the {non-occluded, occluded, unknown} mask."""

    disparity: DisparityImage
    occlusion_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.occlusion_mask, dtype=np.uint8)
        if mask.shape != self.disparity.values.shape:
            raise ValueError("mask dimensions must match the disparity map")
        allowed = {int(s) for s in OcclusionState}
        present = set(np.unique(mask).tolist())
        if not present <= allowed:
            raise ValueError(f"mask holds invalid states: {sorted(present - allowed)}")
        known = mask != int(OcclusionState.UNKNOWN)
        if np.any(known & ~self.disparity.valid):
            raise ValueError("every non-unknown mask pixel needs a valid disparity")
        object.__setattr__(self, "occlusion_mask", mask)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic scene parameters.

    ``samples_per_boundary=None`` draws 3..5 samples per boundary
    independently; ``interior_rate`` adds that fraction of interior
    pixels as extra observations (0 disables them).
    """

    width: int = 320
    height: int = 240
    n_planes: int = 5
    noise_sigma: float = 0.0
    samples_per_boundary: Optional[int] = None
    interior_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValueError("scene dimensions must be at least 32x32")
        if self.n_planes < 2:
            raise ValueError("need at least 2 planes")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.samples_per_boundary is not None and self.samples_per_boundary < 1:
            raise ValueError("samples_per_boundary must be at least 1")
        if not 0.0 <= self.interior_rate <= 1.0:
            raise ValueError("interior_rate must be in [0, 1]")


@dataclass(frozen=True)
class SyntheticScene:
    """Generated scene. ``planes`` are anchored at (0, 0): coefficients are
    global, d(u, v) = alpha*u + beta*v + gamma. ``left`` is a rendered
    reference image (flat per-region colors plus mild noise) so the
    segmentation stage has something to work on."""

    planes: tuple
    region_map: np.ndarray
    gt: GroundTruth
    sparse_observations: DisparityImage
    noise_sigma: float
    left: Optional[Image] = None


# ---------------------------------------------------------------------------
# images


def load_image(path: str) -> Image:
    """Decode an 8-bit PNG/PGM/PPM file (RGB color order)."""
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    try:
        img = PILImage.open(path)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"not a supported raster file: {path}") from exc
    except OSError as exc:
        raise CorruptDataError(f"unreadable file: {path}") from exc
    with img:
        if img.format not in ("PNG", "PPM"):
            raise UnsupportedFormatError(f"unsupported format {img.format!r}: {path}")
        if img.width * img.height > _MAX_PIXELS:
            raise DimensionOverflowError(f"image too large: {img.size}")
        mode = img.mode
        if mode == "1":
            img = img.convert("L")
        elif mode == "P":
            img = img.convert("RGB")
        elif mode not in ("L", "RGB"):
            raise UnsupportedFormatError(f"unsupported pixel mode {mode!r}: {path}")
        try:
            arr = np.asarray(img)
        except OSError as exc:
            raise CorruptDataError(f"truncated or corrupt image: {path}") from exc
    return Image(arr.astype(np.uint8))


def save_image(image: Image, path: str) -> None:
    """Write an Image as PNG/PGM/PPM according to the file extension."""
    PILImage.fromarray(image.data).save(path)


# ---------------------------------------------------------------------------
# disparity containers


def _read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", blob)
    if m is None:
        raise FormatMismatchError(f"not a pfm file: {path}")
    if m.group(1) == b"PF":
        raise FormatMismatchError(f"color pfm is not a disparity map: {path}")
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    if w < 1 or h < 1 or scale == 0:
        raise CorruptDataError(f"bad pfm header: {path}")
    if w * h > _MAX_PIXELS:
        raise DimensionOverflowError(f"pfm dimensions too large: {w}x{h}")
    need = w * h * 4
    raster = blob[m.end():]
    if len(raster) < need:
        raise CorruptDataError(f"pfm raster truncated: {path}")
    dt = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(raster[:need], dtype=dt).reshape(h, w)
    return np.flipud(arr).astype(np.float32)  # pfm rows run bottom-up


def _write_pfm(path: str, arr32: np.ndarray) -> None:
    h, w = arr32.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(arr32).astype("<f4").tobytes())


def _read_png16(path: str) -> np.ndarray:
    try:
        img = PILImage.open(path)
    except UnidentifiedImageError as exc:
        raise FormatMismatchError(f"not a png file: {path}") from exc
    with img:
        if img.format != "PNG":
            raise FormatMismatchError(f"expected png, got {img.format!r}: {path}")
        if img.width * img.height > _MAX_PIXELS:
            raise DimensionOverflowError(f"png dimensions too large: {img.size}")
        if img.mode not in ("I;16", "I"):
            raise FormatMismatchError(f"expected 16-bit grayscale png: {path}")
        try:
            arr = np.asarray(img)
        except OSError as exc:
            raise CorruptDataError(f"truncated png: {path}") from exc
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > 65535:
        raise CorruptDataError(f"png16 sample values out of range: {path}")
    return arr.astype(np.uint16)


def load_disparity(path: str, format: str) -> DisparityImage:
    """Read a disparity map; ``format`` is 'png16' or 'pfm'.

    png16 decodes stored v as v/256 with 0 invalid; pfm marks
    non-positive and non-finite entries invalid.
    """
    if format not in ("png16", "pfm"):
        raise ValueError(f"unknown disparity format {format!r}")
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    if format == "png16":
        stored = _read_png16(path)
        valid = stored > 0
        return DisparityImage(stored.astype(np.float64) / 256.0, valid)
    arr = _read_pfm(path)
    valid = np.isfinite(arr) & (arr > 0)
    return DisparityImage(np.where(valid, arr, 0).astype(np.float64), valid)


def save_disparity(d: DisparityImage, path: str, format: str) -> None:
    """Write a disparity map; png16 requires values below 65535/256."""
    if format not in ("png16", "pfm"):
        raise ValueError(f"unknown disparity format {format!r}")
    if format == "png16":
        stored = np.rint(d.values * 256.0).astype(np.int64)
        stored[~d.valid] = 0
        stored[d.valid & (stored == 0)] = 1  # keep valid zeros valid
        if stored.max() > 65535:
            raise DisparityRangeError("disparity too large for the png16 container")
        _save_png16_array(path, stored.astype(np.uint16))
        return
    arr = d.values.astype(np.float32)
    arr[~d.valid] = 0.0
    _write_pfm(path, arr)


def _save_png16_array(path: str, stored: np.ndarray) -> None:
    PILImage.fromarray(stored.astype(np.uint16)).save(path)


# ---------------------------------------------------------------------------
# synthetic scenes

_MIN_THICK = 6
_MIN_AREA = 120
_KINDS = ("v", "h", "d+", "d-")
_KIND_PROBS = (0.35, 0.35, 0.15, 0.15)
_NORMALS = {"v": (1.0, 0.0), "h": (0.0, 1.0), "d+": (1.0, 1.0), "d-": (1.0, -1.0)}


def _measures(w: int, h: int) -> dict:
    uu, vv = np.meshgrid(np.arange(w, dtype=np.int64), np.arange(h, dtype=np.int64))
    return {"v": uu, "h": vv, "d+": uu + vv, "d-": uu - vv}


def _split_regions(rng, w, h, n_planes):
    """Recursively split the largest region by half-plane cuts.

    Cut coordinates already used by the same cut family are reused with
    probability 1/2 (when still valid for the region), which lines up
    boundaries across regions and creates 4-way junctions. Every region
    stays convex, hence connected.
    """
    meas = _measures(w, h)
    region = np.zeros((h, w), dtype=np.int32)
    used = {k: [] for k in _KINDS}
    splits = []
    n_regions = 1
    while n_regions < n_planes:
        areas = np.bincount(region.ravel(), minlength=n_regions)
        placed = False
        for rid in np.argsort(-areas, kind="stable"):
            mask = region == rid
            for _ in range(60):
                kind = str(rng.choice(_KINDS, p=_KIND_PROBS))
                vals = meas[kind][mask]
                lo, hi = int(vals.min()), int(vals.max())
                if hi - lo < 2 * _MIN_THICK:
                    continue
                t = None
                pool = used[kind]
                if pool and rng.random() < 0.5:
                    cand = pool[int(rng.integers(len(pool)))]
                    if lo + _MIN_THICK <= cand <= hi - _MIN_THICK + 1:
                        t = cand
                if t is None:
                    t = int(rng.integers(lo + _MIN_THICK, hi - _MIN_THICK + 2))
                child = mask & (meas[kind] >= t)
                a_child = int(np.count_nonzero(child))
                a_parent = int(np.count_nonzero(mask)) - a_child
                if a_child < _MIN_AREA or a_parent < _MIN_AREA:
                    continue
                region[child] = n_regions
                splits.append((int(rid), n_regions, kind, t))
                used[kind].append(t)
                n_regions += 1
                placed = True
                break
            if placed:
                break
        if not placed:
            raise SynthesisError("no region can host another cut; "
                                 "fewer planes or a larger image needed")
    return region, splits


def _draw_planes(rng, splits, w, h, n):
    """Assign a plane to every region: a random root, then per split either
    a hinge (child tilts about the cut line) or a depth offset."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    corners_u = np.array([0.0, w - 1.0, 0.0, w - 1.0])
    corners_v = np.array([0.0, 0.0, h - 1.0, h - 1.0])
    planes = np.zeros((n, 3))
    scale = 1.0
    root = None
    for trial in range(40):
        a = rng.uniform(-0.08, 0.08) * scale
        b = rng.uniform(-0.08, 0.08) * scale
        c = rng.uniform(15.0, 60.0) - a * cx - b * cy
        d = a * corners_u + b * corners_v + c
        if d.min() >= 3.0 and d.max() <= 78.0:
            root = (a, b, c)
            break
        if trial % 10 == 9:
            scale *= 0.5
    if root is None:
        raise SynthesisError("could not place a root plane in range")
    planes[0] = root
    for parent, child, kind, t in splits:
        if rng.random() < 0.4:
            # hinge: slope s per pixel normal to the cut line, steep enough
            # that the crease is not confusable with a coplanar pair
            s = rng.uniform(0.12, 0.20)
            if rng.random() < 0.5:
                s = -s
            gx, gy = _NORMALS[kind]
            s /= math.hypot(gx, gy)
            planes[child] = planes[parent] + s * np.array([gx, gy, -float(t)])
        else:
            off = rng.uniform(5.0, 12.0)
            if rng.random() < 0.5:
                off = -off
            planes[child] = planes[parent] + np.array([0.0, 0.0, off])
    return planes


def _dilate_chebyshev(mask, radius):
    """Binary dilation with a (2*radius+1)^2 square structuring element."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dy in range(-radius, radius + 1):
        ys = slice(max(0, -dy), h - max(0, dy))
        yd = slice(max(0, dy), h - max(0, -dy))
        for dx in range(-radius, radius + 1):
            xs = slice(max(0, -dx), w - max(0, dx))
            xd = slice(max(0, dx), w - max(0, -dx))
            out[ys, xs] |= mask[yd, xd]
    return out


def _interface_pixels(region):
    """Per adjacent region pair (i, j), the 4-adjacencies crossing their
    interface as two linear-index arrays (pixels on i's side, matching
    pixels on j's side), in scan order per direction."""
    h, w = region.shape
    reg = region.astype(np.int64)
    n = int(reg.max()) + 1
    hy, hx = np.nonzero(reg[:, :-1] != reg[:, 1:])
    vy, vx = np.nonzero(reg[:-1, :] != reg[1:, :])
    pk, la, lb = [], [], []
    for ay, ax, by, bx in (
        (hy, hx, hy, hx + 1),
        (vy, vx, vy + 1, vx),
    ):
        ra, rb = reg[ay, ax], reg[by, bx]
        key = np.minimum(ra, rb) * n + np.maximum(ra, rb)
        lin_a = ay * w + ax
        lin_b = by * w + bx
        swap = ra > rb
        pk.append(key)
        la.append(np.where(swap, lin_b, lin_a))
        lb.append(np.where(swap, lin_a, lin_b))
    pk = np.concatenate(pk)
    la = np.concatenate(la)
    lb = np.concatenate(lb)
    order = np.argsort(pk, kind="stable")
    pk, la, lb = pk[order], la[order], lb[order]
    out = []
    for key in np.unique(pk):
        s = np.searchsorted(pk, key)
        e = np.searchsorted(pk, key, side="right")
        out.append(((int(key // n), int(key % n)), la[s:e], lb[s:e]))
    return out


def generate_synthetic(config: SynthConfig) -> SyntheticScene:
    """Build a piecewise-planar scene with known boundary structure.

    Deterministic in ``config``. Region planes are redrawn until every
    adjacent pair is clean: either the planes nearly agree along the
    interface (a hinge/continuation) or one is in front by at least 4 px
    everywhere on it, so ground-truth boundary labels are unambiguous.
    Observations are ground truth plus N(0, sigma^2) at 3-5 random
    pixel adjacencies per hinge boundary and at ``interior_rate`` of all
    pixels, except within 3 px of a depth-discontinuity interface and at
    occluded pixels near any interface (where a window-based matcher
    would fail); the noise draw does not depend on sigma, so one seed
    yields the same geometry and sample sites across noise levels.
    """
    w, h = config.width, config.height
    if w * h < config.n_planes * _MIN_AREA:
        raise SynthesisError("image too small for the requested plane count")
    rng = np.random.default_rng(config.seed)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))

    # Some region layouts are hard to depth-assign (e.g. many siblings split
    # from one root all touching each other, so every pairwise constraint
    # must hold at once); when plane draws keep failing, redraw the layout.
    planes = None
    for _ in range(25):
        region, splits = _split_regions(rng, w, h, config.n_planes)
        interfaces = _interface_pixels(region)
        for _ in range(30):
            cand = _draw_planes(rng, splits, w, h, config.n_planes)
            gt_vals = np.empty((h, w))
            for rid in range(config.n_planes):
                m = region == rid
                gt_vals[m] = cand[rid, 0] * uu[m] + cand[rid, 1] * vv[m] + cand[rid, 2]
            if gt_vals.min() < 0.5 or gt_vals.max() > 200.0:
                continue
            diffs = cand[:, None, :] - cand[None, :, :]
            distinct = np.abs(diffs).max(axis=2) > 1e-9
            if not distinct[np.triu_indices(config.n_planes, 1)].all():
                continue
            ok = True
            for (i, j), lin_a, lin_b in interfaces:
                lins = np.unique(np.concatenate((lin_a, lin_b)))
                us = (lins % w).astype(np.float64)
                vs = (lins // w).astype(np.float64)
                dq = cand[i] - cand[j]
                g = dq[0] * us + dq[1] * vs + dq[2]
                # A hinge interface needs a real slope discontinuity on
                # top of near-zero gaps: two parallel surfaces a fraction
                # of a pixel apart would otherwise read as a hinge while
                # being coplanar for all practical purposes.
                hinge_like = (np.abs(g).max() <= 0.25
                              and math.hypot(dq[0], dq[1]) >= 0.1)
                if not (hinge_like or g.min() >= 4.0 or g.max() <= -4.0):
                    ok = False
                    break
            if ok:
                planes = cand
                break
        if planes is not None:
            break
    if planes is None:
        raise SynthesisError("could not draw a clean piecewise-planar scene")

    all_true = np.ones((h, w), dtype=bool)
    gt_disp = DisparityImage(gt_vals, all_true)
    mask = np.full((h, w), int(OcclusionState.NON_OCCLUDED), dtype=np.uint8)
    mask[occlusion_scan(gt_vals, all_true)] = int(OcclusionState.OCCLUDED)
    gt = GroundTruth(gt_disp, mask)

    # Sampling mimics a window-based matcher. Near a strong depth edge the
    # correlation window is contaminated on both sides and the left-right
    # check rejects occluded pixels, so nothing is sampled within 3 px of a
    # depth-discontinuity interface, nor at occluded pixels near any
    # interface. Hinges are weak edges: whole 4-adjacencies are drawn there
    # so both sides stay equally observed, and interior sampling covers
    # every surface.
    occ_flat = (mask == int(OcclusionState.OCCLUDED)).ravel()
    depth_edge = np.zeros((h, w), dtype=bool)
    iface_mask = np.zeros((h, w), dtype=bool)
    jump = {}
    for (i, j), lin_a, lin_b in interfaces:
        dq = planes[i] - planes[j]
        lins = np.concatenate((lin_a, lin_b))
        g = dq[0] * (lins % w) + dq[1] * (lins // w) + dq[2]
        jump[(i, j)] = np.abs(g).min() >= 4.0
        iface_mask.ravel()[lins] = True
        if jump[(i, j)]:
            depth_edge.ravel()[lins] = True
    blocked = _dilate_chebyshev(depth_edge, 3).ravel()
    blocked |= occ_flat & _dilate_chebyshev(iface_mask, 3).ravel()
    sample_lin = []
    for (i, j), lin_a, lin_b in interfaces:
        if config.samples_per_boundary is None:
            k = int(rng.integers(3, 6))
        else:
            k = config.samples_per_boundary
        k = min(k, lin_a.size)
        sel = rng.choice(lin_a.size, size=k, replace=False)
        if jump[(i, j)]:
            continue
        picked = np.concatenate((lin_a[sel], lin_b[sel]))
        sample_lin.append(picked[~(occ_flat[picked] | blocked[picked])])
    interior = (rng.random(h * w) < config.interior_rate) & ~blocked
    sample_lin.append(np.nonzero(interior)[0])
    lins = np.unique(np.concatenate(sample_lin))
    noise = rng.standard_normal(lins.size)

    flat_vals = np.zeros(h * w)
    flat_valid = np.zeros(h * w, dtype=bool)
    flat_vals[lins] = np.maximum(gt_vals.ravel()[lins] + config.noise_sigma * noise,
                                 1.0 / 256.0)
    flat_valid[lins] = True
    obs = DisparityImage(flat_vals.reshape(h, w), flat_valid.reshape(h, w))

    base = np.empty((config.n_planes, 3))
    for rid in range(config.n_planes):
        hue = (0.12 + rid * 0.61803398875) % 1.0
        base[rid] = colorsys.hsv_to_rgb(hue, 0.55, 0.85)
    img = base[region] * 255.0 + rng.normal(0.0, 3.0, (h, w, 3))
    left = Image(np.clip(np.rint(img), 0, 255).astype(np.uint8))

    return SyntheticScene(
        planes=tuple(Plane(float(p[0]), float(p[1]), float(p[2])) for p in planes),
        region_map=region,
        gt=gt,
        sparse_observations=obs,
        noise_sigma=float(config.noise_sigma),
        left=left,
    )


# ---------------------------------------------------------------------------
# scene directories


def save_scene(scene: SyntheticScene, out_dir: str) -> None:
    """Write a scene directory: left.png, gt.pfm, mask.png, obs.pfm,
    regions.png (16-bit region ids) and a scene.json manifest."""
    os.makedirs(out_dir, exist_ok=True)
    if scene.left is not None:
        save_image(scene.left, os.path.join(out_dir, "left.png"))
    save_disparity(scene.gt.disparity, os.path.join(out_dir, "gt.pfm"), "pfm")
    save_disparity(scene.sparse_observations, os.path.join(out_dir, "obs.pfm"), "pfm")
    PILImage.fromarray(scene.gt.occlusion_mask).save(os.path.join(out_dir, "mask.png"))
    _save_png16_array(os.path.join(out_dir, "regions.png"),
                      scene.region_map.astype(np.uint16))
    manifest = {
        "width": int(scene.region_map.shape[1]),
        "height": int(scene.region_map.shape[0]),
        "noise_sigma": scene.noise_sigma,
        "n_regions": len(scene.planes),
        "planes": [[p.alpha, p.beta, p.gamma] for p in scene.planes],
    }
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(scene_dir: str) -> SyntheticScene:
    """Read back a scene directory written by save_scene.

    Mask pixels whose stored state requires a disparity the gt file
    cannot represent (it has none) are demoted to UNKNOWN.
    """
    manifest_path = os.path.join(scene_dir, "scene.json")
    if not os.path.isfile(manifest_path):
        raise MissingFileError(f"no scene manifest in {scene_dir}")
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptDataError(f"bad scene manifest: {manifest_path}") from exc
    try:
        planes = tuple(Plane(float(a), float(b), float(c))
                       for a, b, c in manifest["planes"])
        sigma = float(manifest["noise_sigma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptDataError(f"bad scene manifest: {manifest_path}") from exc

    gt_disp = load_disparity(os.path.join(scene_dir, "gt.pfm"), "pfm")
    obs = load_disparity(os.path.join(scene_dir, "obs.pfm"), "pfm")
    mask_path = os.path.join(scene_dir, "mask.png")
    if not os.path.isfile(mask_path):
        raise MissingFileError(f"no such file: {mask_path}")
    with PILImage.open(mask_path) as mimg:
        if mimg.mode != "L":
            raise FormatMismatchError(f"mask must be 8-bit grayscale: {mask_path}")
        mask = np.asarray(mimg, dtype=np.uint8)
    allowed = {int(s) for s in OcclusionState}
    if not set(np.unique(mask).tolist()) <= allowed:
        raise CorruptDataError(f"mask holds invalid states: {mask_path}")
    mask = mask.copy()
    mask[~gt_disp.valid] = int(OcclusionState.UNKNOWN)

    region = _read_png16(os.path.join(scene_dir, "regions.png")).astype(np.int32)
    left_path = os.path.join(scene_dir, "left.png")
    left = load_image(left_path) if os.path.isfile(left_path) else None
    return SyntheticScene(
        planes=planes,
        region_map=region,
        gt=GroundTruth(gt_disp, mask),
        sparse_observations=obs,
        noise_sigma=sigma,
        left=left,
    )
