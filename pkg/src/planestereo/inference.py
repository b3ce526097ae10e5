"""Particle-based joint optimization of planes and boundary labels.

The continuous plane variables are handled by resampling: each outer
iteration draws a small particle set around the incumbent plane of every
segment (particle 0 is always the incumbent itself), builds a discrete
factor graph whose tables are exact potential evaluations at those
particles, runs convergent convex message passing on it, and adopts the
decoded assignment only when its true energy does not increase. The
perturbation scale shrinks as sigma0 * exp(-t/decay) with t counting
outer iterations from 1.

The message passing is factor-block coordinate descent on the dual of
the MAP LP (uniform counting numbers): per factor, messages absorb the
current unary beliefs, the factor min-marginals are split evenly across
its arguments, and the dual lower bound never decreases. Decoding is a
per-variable argmin with lowest-index tie-breaking, which is exact on
acyclic graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ._kernels import mplp_run, pair_min_gaps, plane_mins, quad_forms, tq_sums
from .model import (BoundaryLabel, Plane, StereoModel, _valid_obs,
                    directed_remap, global_coeffs, phi_junction3,
                    phi_junction4, total_energy)

__all__ = [
    "PcbpConfig",
    "FactorGraph",
    "Solution",
    "fit_initial_planes",
    "sample_particles",
    "discretize",
    "convex_bp",
    "pcbp",
]


@dataclass(frozen=True)
class PcbpConfig:
    """Outer-loop and solver parameters.

    ``n_particles=1`` is allowed as a degenerate mode that keeps the
    planes fixed and only optimizes boundary labels.
    """

    n_particles: int = 10
    n_outer_iters: int = 5
    sigma_alpha0: float = 0.5
    sigma_beta0: float = 0.5
    sigma_gamma0: float = 5.0
    decay: float = 10.0
    bp_max_sweeps: int = 200
    bp_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be at least 1")
        if self.n_outer_iters < 1:
            raise ValueError("n_outer_iters must be at least 1")
        if min(self.sigma_alpha0, self.sigma_beta0, self.sigma_gamma0) <= 0:
            raise ValueError("sigma values must be positive")
        if self.decay <= 0:
            raise ValueError("decay must be positive")
        if self.bp_max_sweeps < 1:
            raise ValueError("bp_max_sweeps must be at least 1")
        if self.bp_tolerance < 0:
            raise ValueError("bp_tolerance must be non-negative")


@dataclass(frozen=True)
class FactorGraph:
    """Discrete MAP problem: per-variable state counts, per-variable unary
    cost vectors, and higher-arity factors as (scope, table) with table
    axes following scope order.

    ``discretize`` orders variables as one per segment (particle states)
    followed by one per neighbor pair (the 4 boundary labels).
    """

    nstates: np.ndarray
    unaries: Tuple[np.ndarray, ...]
    factors: Tuple[Tuple[Tuple[int, ...], np.ndarray], ...]

    def __post_init__(self):
        ns = np.asarray(self.nstates, dtype=np.int64)
        if ns.ndim != 1 or (ns.size and ns.min() < 1):
            raise ValueError("nstates must be a 1-D array of positive counts")
        object.__setattr__(self, "nstates", ns)
        if len(self.unaries) != ns.size:
            raise ValueError("need one unary vector per variable")
        unaries = []
        for v, u in enumerate(self.unaries):
            u = np.asarray(u, dtype=np.float64)
            if u.shape != (ns[v],):
                raise ValueError(f"unary {v} has wrong length")
            if not np.isfinite(u).all():
                raise ValueError("non-finite unary entry")
            unaries.append(u)
        object.__setattr__(self, "unaries", tuple(unaries))
        factors = []
        for scope, tab in self.factors:
            scope = tuple(int(v) for v in scope)
            if len(scope) < 1:
                raise ValueError("factor scope must not be empty")
            if len(set(scope)) != len(scope):
                raise ValueError("factor scope repeats a variable")
            if min(scope) < 0 or max(scope) >= ns.size:
                raise ValueError("factor scope references a missing variable")
            tab = np.ascontiguousarray(tab, dtype=np.float64)
            if tab.shape != tuple(int(ns[v]) for v in scope):
                raise ValueError("factor table shape does not match its scope")
            if not np.isfinite(tab).all():
                raise ValueError("non-finite table entry")
            factors.append((scope, tab))
        object.__setattr__(self, "factors", tuple(factors))


@dataclass(frozen=True)
class Solution:
    """Final assignment with its true energy, the last dual bound, and the
    incumbent energy after initialization and after every outer iteration."""

    planes: Tuple[Plane, ...]
    labels: Tuple[BoundaryLabel, ...]
    energy: float
    bound: float
    energies: Tuple[float, ...]


# ---------------------------------------------------------------------------
# initialization


def fit_initial_planes(segmentation, obs) -> list:
    """Robust per-segment plane fit to the observed disparities.

    Least squares on center-shifted coordinates followed by 5 rounds of
    Huber reweighting, w = min(1, k/|r|) with k set each round from the
    residual spread (1.345 times the MAD-based scale estimate), so gross
    outliers end up with near-zero weight no matter their magnitude.
    Segments with fewer than 3 observed pixels or a rank-deficient design
    fall back to a flat plane at the median of their own observations,
    else the median of their neighbors' fitted center disparities, else
    the global median, else 0.
    """
    segments = segmentation.segments
    fitted: list = [None] * len(segments)
    own_gamma: list = [None] * len(segments)

    for seg in segments:
        us, vs, vals = _valid_obs(seg.pixels, obs)
        if vals.size:
            own_gamma[seg.id] = float(np.median(vals))
        if vals.size < 3:
            continue
        a = np.column_stack((us - seg.center[0], vs - seg.center[1],
                             np.ones(vals.size)))
        sol, _, rank, _ = np.linalg.lstsq(a, vals, rcond=None)
        if rank < 3:
            continue
        for _ in range(5):
            r = vals - a @ sol
            ar = np.abs(r - np.median(r))
            k = max(1.345 * 1.4826 * float(np.median(ar)), 1e-9)
            ar0 = np.maximum(np.abs(r), 1e-300)
            wts = np.sqrt(np.where(ar0 <= k, 1.0, k / ar0))
            sol2, _, rank2, _ = np.linalg.lstsq(a * wts[:, None], vals * wts,
                                                rcond=None)
            if rank2 < 3:
                break
            sol = sol2
        fitted[seg.id] = sol

    pass1 = [float(sol[2]) if sol is not None else g
             for sol, g in zip(fitted, own_gamma)]
    defined = [g for g in pass1 if g is not None]
    global_med = float(np.median(defined)) if defined else 0.0
    neighbors: dict = {i: [] for i in range(len(segments))}
    for pair in segmentation.adjacency:
        neighbors[pair.i].append(pair.j)
        neighbors[pair.j].append(pair.i)

    planes = []
    for seg in segments:
        sol = fitted[seg.id]
        if sol is not None:
            planes.append(Plane(float(sol[0]), float(sol[1]), float(sol[2])))
            continue
        gamma = own_gamma[seg.id]
        if gamma is None:
            nbr = [pass1[j] for j in neighbors[seg.id] if pass1[j] is not None]
            gamma = float(np.median(nbr)) if nbr else global_med
        planes.append(Plane(0.0, 0.0, gamma))
    return planes


def sample_particles(current, sigma, n: int, rng) -> np.ndarray:
    """Draw a particle set around one plane.

    Row 0 is the current plane unchanged; rows 1..n-1 are coordinate-wise
    normal perturbations with scales (sigma_alpha, sigma_beta,
    sigma_gamma). Returns an (n, 3) array of (alpha, beta, gamma) rows.
    """
    if n < 2:
        raise ValueError("need at least 2 particles")
    cur = current.as_array() if hasattr(current, "as_array") else \
        np.asarray(current, dtype=np.float64)
    if cur.shape != (3,):
        raise ValueError("current plane must have 3 coefficients")
    sig = np.asarray(sigma, dtype=np.float64)
    if sig.shape != (3,) or sig.min() <= 0:
        raise ValueError("sigma must be 3 positive scales")
    out = np.empty((n, 3))
    out[0] = cur
    out[1:] = rng.normal(cur, sig, size=(n - 1, 3))
    return out


# ---------------------------------------------------------------------------
# discretization


def _plane_rows(model: StereoModel, particles: np.ndarray) -> list:
    return [global_coeffs(particles[i], model._centers[i])
            for i in range(particles.shape[0])]


def _plane_unaries(model: StereoModel, rows: list) -> list:
    prm = model.params
    out = []
    for i, (us, vs, vals) in enumerate(model._seg_obs):
        out.append(prm.w_seg * tq_sums(us, vs, vals, rows[i], prm.k))
    return out


def _pair_table(model: StereoModel, rows: list, idx: int) -> np.ndarray:
    """Combined boundary table (4, N_i, N_j): w_bdy1 * data term plus
    w_bdy2 * compatibility term, entry-exact with the scalar potentials."""
    prm = model.params
    pair = model.segmentation.adjacency[idx]
    ri, rj = rows[pair.i], rows[pair.j]
    ni, nj = ri.shape[0], rj.shape[0]

    us, vs, vals = model._pair_band_obs[idx]
    ti = tq_sums(us, vs, vals, ri, prm.k)
    tj = tq_sums(us, vs, vals, rj, prm.k)
    t1 = np.empty((4, ni, nj))
    half = 0.5 * (ti[:, None] + tj[None, :])
    t1[int(BoundaryLabel.CO)] = half
    t1[int(BoundaryLabel.HI)] = half
    t1[int(BoundaryLabel.LO)] = np.broadcast_to(ti[:, None], (ni, nj))
    t1[int(BoundaryLabel.RO)] = np.broadcast_to(tj[None, :], (ni, nj))

    bus, bvs = model._pair_band[idx]
    negi = np.where(plane_mins(bus, bvs, ri) < 0.0, prm.lambda_imp, 0.0)
    negj = np.where(plane_mins(bus, bvs, rj) < 0.0, prm.lambda_imp, 0.0)
    base = negi[:, None] + negj[None, :]
    occ_ij = np.where(pair_min_gaps(bus, bvs, ri, rj) < 0.0, prm.lambda_imp, 0.0)
    occ_ji = np.where(pair_min_gaps(bus, bvs, rj, ri) < 0.0, prm.lambda_imp, 0.0).T
    t2 = np.empty((4, ni, nj))
    t2[int(BoundaryLabel.CO)] = base + quad_forms(ri, rj, model._pair_union_mom[idx])
    t2[int(BoundaryLabel.HI)] = (prm.lambda_hinge + base) + quad_forms(
        ri, rj, model._pair_band_mom[idx])
    t2[int(BoundaryLabel.LO)] = (prm.lambda_occ + base) + occ_ij
    t2[int(BoundaryLabel.RO)] = (prm.lambda_occ + base) + occ_ji
    return (prm.w_bdy1 * t1) + (prm.w_bdy2 * t2)


def _color_unary(model: StereoModel, idx: int) -> np.ndarray:
    prm = model.params
    vec = np.full(4, prm.lambda_col)
    vec[int(BoundaryLabel.CO)] = min(prm.kappa * float(model._pair_chi2[idx]),
                                     prm.lambda_col)
    return prm.w_col * vec


def _junction_factors(model: StereoModel, n_seg: int) -> list:
    """Junction factors over stored pair labels. Base tables are built by
    direct potential calls on directed labels, then remapped per boundary
    flip; equal flip patterns share one table array."""
    prm = model.params
    seg = model.segmentation
    base3 = np.empty((4, 4, 4))
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                base3[l0, l1, l2] = phi_junction3((l0, l1, l2), prm)
    base4 = np.empty((4, 4, 4, 4))
    orient = ("v", "h", "v", "h")
    for l0 in range(4):
        for l1 in range(4):
            for l2 in range(4):
                for l3 in range(4):
                    base4[l0, l1, l2, l3] = phi_junction4(
                        (l0, l1, l2, l3), orient, prm)
    remaps = (directed_remap(False), directed_remap(True))

    factors = []
    cache3: dict = {}
    for jn in seg.junctions3:
        key = jn.flips
        tab = cache3.get(key)
        if tab is None:
            r = [remaps[1 if f else 0] for f in key]
            tab = prm.w_jct3 * base3[np.ix_(r[0], r[1], r[2])]
            cache3[key] = tab
        factors.append((tuple(n_seg + p for p in jn.pairs), tab))
    cache4: dict = {}
    for jn in seg.junctions4:
        key = jn.flips
        tab = cache4.get(key)
        if tab is None:
            r = [remaps[1 if f else 0] for f in key]
            tab = prm.w_crs4 * base4[np.ix_(r[0], r[1], r[2], r[3])]
            cache4[key] = tab
        factors.append((tuple(n_seg + p for p in jn.pairs), tab))
    return factors


def discretize(model: StereoModel, particles) -> FactorGraph:
    """Build the discrete MAP problem over particle indices and labels.

    Every table entry equals the corresponding weighted potential call at
    those particles, bit for bit: the same kernels run on the same cached
    pixel arrays in the same order.
    """
    parts = np.asarray(particles, dtype=np.float64)
    seg = model.segmentation
    n_seg = len(seg.segments)
    if parts.ndim != 3 or parts.shape[0] != n_seg or parts.shape[2] != 3:
        raise ValueError("particles must be (n_segments, n_particles, 3)")
    n_pairs = len(seg.adjacency)

    rows = _plane_rows(model, parts)
    nstates = np.concatenate((np.full(n_seg, parts.shape[1], dtype=np.int64),
                              np.full(n_pairs, 4, dtype=np.int64)))
    unaries = _plane_unaries(model, rows)
    unaries.extend(_color_unary(model, idx) for idx in range(n_pairs))
    factors = []
    for idx, pair in enumerate(seg.adjacency):
        factors.append(((n_seg + idx, pair.i, pair.j), _pair_table(model, rows, idx)))
    factors.extend(_junction_factors(model, n_seg))
    return FactorGraph(nstates, tuple(unaries), tuple(factors))


# ---------------------------------------------------------------------------
# convex message passing


def convex_bp(graph: FactorGraph, max_sweeps: int = 200, tolerance: float = 1e-4,
              trace=None) -> tuple:
    """Run dual coordinate descent to convergence; returns (assignment,
    lower_bound).

    The bound is checked to be non-decreasing across sweeps. ``trace``
    may be a writable text stream receiving one 'sweep <k> bound <b>'
    line per sweep.
    """
    ns = np.asarray(graph.nstates, dtype=np.int64)
    nvar = ns.size
    beliefs = [np.array(u, dtype=np.float64) for u in graph.unaries]
    kept = []
    for scope, tab in graph.factors:
        if not np.isfinite(tab).all():
            raise ValueError("non-finite table entry")
        if len(scope) == 1:
            beliefs[scope[0]] = beliefs[scope[0]] + tab
        else:
            kept.append((scope, tab))

    if not kept:
        assignment = np.array([int(np.argmin(bv)) for bv in beliefs], dtype=np.int64)
        bound = float(sum(float(bv.min()) for bv in beliefs))
        if trace is not None:
            trace.write(f"sweep 0 bound {bound!r}\n")
        return assignment, bound

    u_off = np.zeros(nvar + 1, dtype=np.int64)
    np.cumsum(ns, out=u_off[1:])
    b = np.concatenate(beliefs)
    scope_flat = np.concatenate([np.asarray(s, dtype=np.int64) for s, _ in kept])
    scope_off = np.zeros(len(kept) + 1, dtype=np.int64)
    np.cumsum(np.array([len(s) for s, _ in kept], dtype=np.int64),
              out=scope_off[1:])
    tab_flat = np.concatenate([t.ravel() for _, t in kept])
    tab_off = np.zeros(len(kept) + 1, dtype=np.int64)
    np.cumsum(np.array([t.size for _, t in kept], dtype=np.int64),
              out=tab_off[1:])
    msg_sizes = ns[scope_flat]
    msg_off = np.zeros(scope_flat.size + 1, dtype=np.int64)
    np.cumsum(msg_sizes, out=msg_off[1:])
    msg = np.zeros(int(msg_off[-1]))
    bounds_out = np.empty(int(max_sweeps))

    sweeps = int(mplp_run(ns, b, u_off, scope_flat, scope_off, tab_flat,
                          tab_off, msg, msg_off, bounds_out,
                          int(max_sweeps), float(tolerance)))
    bounds = bounds_out[:sweeps]
    if sweeps > 1 and np.min(np.diff(bounds)) < -1e-9:
        raise AssertionError("dual bound decreased between sweeps")
    if trace is not None:
        for k in range(sweeps):
            trace.write(f"sweep {k} bound {float(bounds[k])!r}\n")

    assignment = np.empty(nvar, dtype=np.int64)
    for v in range(nvar):
        assignment[v] = int(np.argmin(b[u_off[v]:u_off[v + 1]]))
    return assignment, float(bounds[-1])


# ---------------------------------------------------------------------------
# outer loop


def _greedy_labels(model: StereoModel, rows: list) -> np.ndarray:
    """Per-pair argmin of the combined boundary potentials for fixed
    planes, ignoring junction terms; ties pick the lowest label."""
    n_pairs = len(model.segmentation.adjacency)
    labels = np.empty(n_pairs, dtype=np.int64)
    for idx in range(n_pairs):
        vec = _pair_table(model, rows, idx)[:, 0, 0] + _color_unary(model, idx)
        labels[idx] = int(np.argmin(vec))
    return labels


def pcbp(model: StereoModel, cfg: PcbpConfig = PcbpConfig(), trace=None) -> Solution:
    """Joint plane/label optimization by particle resampling.

    Initial planes come from ``fit_initial_planes`` and initial labels
    from a per-pair greedy sweep; afterwards each outer iteration samples
    particles (keeping the incumbent as particle 0), solves the
    discretized problem, and adopts the decoded assignment only if its
    energy does not increase, so the incumbent energy sequence is
    non-increasing. ``trace`` receives a config header, per-sweep bound
    lines, and one 'iter <t> energy <e> bound <b>' line per iteration.
    """
    seg = model.segmentation
    n_seg = len(seg.segments)
    rng = np.random.default_rng(cfg.seed)
    if trace is not None:
        trace.write(f"# pcbp n_particles={cfg.n_particles} "
                    f"n_outer_iters={cfg.n_outer_iters} "
                    f"sigma0=({cfg.sigma_alpha0!r},{cfg.sigma_beta0!r},"
                    f"{cfg.sigma_gamma0!r}) decay={cfg.decay!r} "
                    f"bp_max_sweeps={cfg.bp_max_sweeps} "
                    f"bp_tolerance={cfg.bp_tolerance!r} seed={cfg.seed}\n")

    inc_planes = np.array([p.as_array() for p in
                           fit_initial_planes(seg, model.observations)])
    inc_labels = _greedy_labels(model, _plane_rows(model, inc_planes[:, None, :]))
    inc_energy = total_energy(inc_planes, inc_labels, model)
    energies = [inc_energy]
    bound = float("nan")

    for t in range(1, cfg.n_outer_iters + 1):
        damp = math.exp(-t / cfg.decay)
        sig = (cfg.sigma_alpha0 * damp, cfg.sigma_beta0 * damp,
               cfg.sigma_gamma0 * damp)
        if cfg.n_particles == 1:
            parts = inc_planes[:, None, :]
        else:
            parts = np.stack([
                sample_particles(inc_planes[i], sig, cfg.n_particles, rng)
                for i in range(n_seg)])
        graph = discretize(model, parts)
        assign, bound = convex_bp(graph, cfg.bp_max_sweeps, cfg.bp_tolerance,
                                  trace=trace)
        cand_planes = parts[np.arange(n_seg), assign[:n_seg]]
        cand_labels = assign[n_seg:]
        cand_energy = total_energy(cand_planes, cand_labels, model)
        if cand_energy <= inc_energy:
            inc_planes = cand_planes
            inc_labels = cand_labels
            inc_energy = cand_energy
        energies.append(inc_energy)
        if trace is not None:
            trace.write(f"iter {t} energy {inc_energy!r} bound {bound!r}\n")

    return Solution(
        planes=tuple(Plane(float(r[0]), float(r[1]), float(r[2]))
                     for r in inc_planes),
        labels=tuple(BoundaryLabel(int(l)) for l in inc_labels),
        energy=float(inc_energy),
        bound=float(bound),
        energies=tuple(float(e) for e in energies),
    )
