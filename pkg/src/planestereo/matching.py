"""Sparse disparity estimation for rectified pairs.

A compact census matcher: per-pixel census codes, Hamming block costs,
scanline aggregation along 4 or 8 directions with the usual small/large
jump penalties, winner-take-all with a uniqueness margin, optional
parabolic subpixel refinement, and a left-right consistency check.
Pixels failing either check are invalid and excluded from the observed
set downstream. ``passthrough`` feeds precomputed or synthetic
observations in unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import (aggregate_costs, census_cost_volume, census_transform,
                       right_argmin, subpixel_refine, wta_margin)
from .imagery import DisparityImage, Image

__all__ = ["MatchConfig", "match", "passthrough"]


@dataclass(frozen=True)
class MatchConfig:
    """Matcher parameters.

    ``uniqueness_margin`` invalidates pixels whose winning disparity is
    not supported by the raw (pre-aggregation) costs: every candidate
    further than 1 step from the raw winner must cost at least the
    margin more, and the raw winner must agree with the aggregated one
    to within a step. Smoothing can manufacture a confident-looking
    minimum out of a flat cost surface (e.g. on textureless input), so
    confidence is judged before aggregation; 0 disables the check.
    ``block_radius`` is capped at 3 so census codes fit 63 bits.
    """

    max_disparity: int = 64
    block_radius: int = 2
    n_paths: int = 8
    p1: float = 10.0
    p2: float = 120.0
    lr_threshold: float = 1.0
    uniqueness_margin: float = 1.0
    subpixel: bool = True

    def __post_init__(self):
        if self.max_disparity < 1:
            raise ValueError("max_disparity must be at least 1")
        if not 1 <= self.block_radius <= 3:
            raise ValueError("block_radius must be in 1..3")
        if self.n_paths not in (4, 8):
            raise ValueError("n_paths must be 4 or 8")
        if not 0 <= self.p1 <= self.p2:
            raise ValueError("need p2 >= p1 >= 0")
        if self.lr_threshold < 0:
            raise ValueError("lr_threshold must be non-negative")
        if self.uniqueness_margin < 0:
            raise ValueError("uniqueness_margin must be non-negative")


def _luma(image) -> np.ndarray:
    data = np.asarray(getattr(image, "data", image))
    if data.ndim == 2:
        return data.astype(np.float32)
    arr = data.astype(np.float32)
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def match(left: Image, right: Image, cfg: MatchConfig = MatchConfig()) -> DisparityImage:
    """Estimate left-view disparities for a rectified pair."""
    gl = _luma(left)
    gr = _luma(right)
    if gl.shape != gr.shape:
        raise ValueError("left and right dimensions differ")
    h, w = gl.shape
    n_bits = (2 * cfg.block_radius + 1) ** 2 - 1

    code_l = census_transform(gl, cfg.block_radius)
    code_r = census_transform(gr, cfg.block_radius)
    cost = census_cost_volume(code_l, code_r, cfg.max_disparity, n_bits)
    agg = aggregate_costs(cost, np.float32(cfg.p1), np.float32(cfg.p2), cfg.n_paths)

    best, _ = wta_margin(agg)
    disp = subpixel_refine(agg, best) if cfg.subpixel else best.astype(np.float64)
    if cfg.uniqueness_margin > 0:
        raw_best, raw_margin = wta_margin(cost)
        valid = (raw_margin >= cfg.uniqueness_margin) \
            & (np.abs(raw_best - best) <= 1)
    else:
        valid = np.ones(best.shape, dtype=bool)

    best_r = right_argmin(agg)
    xs = np.arange(w)[None, :]
    xr = xs - np.rint(disp).astype(np.int64)
    inb = xr >= 0
    xr_safe = np.where(inb, xr, 0)
    dr = np.take_along_axis(best_r, xr_safe, axis=1).astype(np.float64)
    valid &= inb & (np.abs(disp - dr) <= cfg.lr_threshold)

    return DisparityImage(np.where(valid, disp, 0.0), valid)


def passthrough(obs: DisparityImage) -> DisparityImage:
    """Use an existing disparity map as the observation set unchanged."""
    return obs
