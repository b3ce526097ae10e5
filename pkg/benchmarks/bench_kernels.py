"""Time every numeric kernel on both backends.

Imports the numba and pure-numpy backend modules directly (ignoring the
``PLANESTEREO_NO_NUMBA`` selection) and times them on identical inputs,
so the numbers answer "what does the fallback cost on this machine".
Each kernel is also cross-checked between backends on one shared input.

    python3 benchmarks/bench_kernels.py [--repeats N] [--out bench.csv]

The first numba call of each kernel compiles it and is excluded from
timing. Output is comma-separated text with a header row.
"""

import argparse
import sys
import time

import numpy as np

from planestereo._kernels import numpy_backend
from planestereo.harness import format_table

try:
    from planestereo._kernels import numba_backend
except ImportError:
    numba_backend = None


def _grid_mrf_args(seed):
    """Flat message-passing buffers for an 8x8 grid MRF with 5 states,
    laid out exactly like the solver lays them out."""
    rng = np.random.default_rng(seed)
    side = 8
    n = side * side
    ns = np.full(n, 5, np.int64)
    unaries = [rng.normal(0, 3, 5) for _ in range(n)]
    edges = []
    for y in range(side):
        for x in range(side):
            v = y * side + x
            if x + 1 < side:
                edges.append((v, v + 1))
            if y + 1 < side:
                edges.append((v, v + side))
    tabs = [rng.normal(0, 3, (5, 5)) for _ in edges]

    u_off = np.zeros(n + 1, np.int64)
    np.cumsum(ns, out=u_off[1:])
    b = np.concatenate(unaries)
    scope_flat = np.concatenate([np.array(e, np.int64) for e in edges])
    scope_off = np.zeros(len(edges) + 1, np.int64)
    np.cumsum(np.full(len(edges), 2, np.int64), out=scope_off[1:])
    tab_flat = np.concatenate([t.ravel() for t in tabs])
    tab_off = np.zeros(len(edges) + 1, np.int64)
    np.cumsum(np.array([t.size for t in tabs], np.int64), out=tab_off[1:])
    msg_off = np.zeros(scope_flat.size + 1, np.int64)
    np.cumsum(ns[scope_flat], out=msg_off[1:])
    msg = np.zeros(int(msg_off[-1]))
    bounds = np.empty(100)
    return (ns, b, u_off, scope_flat, scope_off, tab_flat, tab_off, msg,
            msg_off, bounds, 100, 1e-6)


def _cases():
    """(name, args_factory) per kernel; factories build fresh inputs so
    in-place kernels never see their own previous output."""
    rng = np.random.default_rng(0)
    gray_l = rng.uniform(0, 255, (240, 320))
    gray_r = np.roll(gray_l, -7, axis=1)
    code_l = numpy_backend.census_transform(gray_l, 3)
    code_r = numpy_backend.census_transform(gray_r, 3)
    cost = numpy_backend.census_cost_volume(code_l, code_r, 64, 48)
    agg = numpy_backend.aggregate_costs(cost, np.float32(1.0),
                                        np.float32(8.0), 4)
    best, _ = numpy_backend.wta_margin(agg)
    lab_img = rng.uniform(0, 100, (240, 320, 3))
    blocks = (np.arange(240)[:, None] // 24 * 10
              + np.arange(320)[None, :] // 32).astype(np.int32)
    disp = rng.uniform(0, 40, (120, 160))
    valid = rng.random((120, 160)) < 0.9
    band_u = rng.uniform(0, 320, 400)
    band_v = rng.uniform(0, 240, 400)
    obs = rng.uniform(0, 40, 400)
    planes = np.column_stack((rng.normal(0, 0.2, 10), rng.normal(0, 0.2, 10),
                              rng.uniform(0, 40, 10)))
    planes_b = planes + rng.normal(0, 0.1, planes.shape)
    moments = rng.normal(0, 1, (3, 3))
    moments = moments @ moments.T

    def slic_args():
        gx, gy = np.meshgrid(np.arange(20, 320, 32), np.arange(12, 240, 24))
        centers = np.zeros((gx.size, 5))
        centers[:, 0] = gx.ravel()
        centers[:, 1] = gy.ravel()
        return (lab_img, centers, 56.0, 0.01, 5)

    return [
        ("census_transform", lambda: (gray_l, 3)),
        ("census_cost_volume", lambda: (code_l, code_r, 64, 48)),
        ("aggregate_costs",
         lambda: (cost, np.float32(1.0), np.float32(8.0), 4)),
        ("wta_margin", lambda: (agg,)),
        ("subpixel_refine", lambda: (agg, best)),
        ("right_argmin", lambda: (agg,)),
        ("occlusion_scan", lambda: (disp, valid)),
        ("slic_iterate", slic_args),
        ("label_components", lambda: (blocks,)),
        ("tq_sums", lambda: (band_u, band_v, obs, planes, 5.0)),
        ("plane_mins", lambda: (band_u, band_v, planes)),
        ("pair_min_gaps", lambda: (band_u, band_v, planes, planes_b)),
        ("quad_forms", lambda: (planes, planes_b, moments)),
        ("mplp_run", lambda: _grid_mrf_args(1)),
    ]


def _time_call(fn, make_args, repeats):
    best = np.inf
    for _ in range(repeats):
        args = make_args()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def _results_agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    if len(a) != len(b):
        return False
    return all(np.allclose(np.asarray(x, np.float64),
                           np.asarray(y, np.float64), atol=1e-6)
               for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", help="write the CSV here instead of stdout")
    args = ap.parse_args(argv)

    rows = []
    for name, make_args in _cases():
        np_fn = getattr(numpy_backend, name)
        np_ms = _time_call(np_fn, make_args, args.repeats)
        if numba_backend is None:
            rows.append((name, None, np_ms, None))
            continue
        nb_fn = getattr(numba_backend, name)
        nb_fn(*make_args())  # compile outside the timed region
        nb_ms = _time_call(nb_fn, make_args, args.repeats)
        agree = _results_agree(np_fn(*make_args()), nb_fn(*make_args()))
        rows.append((name, nb_ms, np_ms,
                     f"{np_ms / nb_ms:.1f}x" if agree else "MISMATCH"))

    text = format_table(("kernel", "numba_ms", "numpy_ms", "speedup"), rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
