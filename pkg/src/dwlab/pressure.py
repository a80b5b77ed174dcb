"""Topological pressure estimators and the gap-condition predicate.

Three estimators are provided:

* ``pressure_separated``: sums ``exp(S_T f)`` over a greedy maximal
  ``(eps, T)``-separated set for the Bowen metric.
* ``pressure_cover``: coarse-grained sums over the words of a refined grid
  cover, minimised over subcovers by greedy weighted set cover.
* ``pressure_transfer``: ``log`` of the leading eigenvalue of a weighted
  subshift matrix, used as an exact oracle.

Flows on the Bolza surface are homogeneous, so the separated-set and cover
estimators sample a short arc of one unstable horocycle instead of the whole
unit tangent bundle; the orbit growth along that arc carries the full
pressure while needing orders of magnitude fewer samples.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import hyperbolic as hyp
from .dynamics import BolzaFlow, DoublingMap, FlatGeodesicFlow, _as_field, birkhoff_sums, phase_space
from .errors import InvalidInputError, NumericalError

MIN_SAMPLE_BUDGET = 1000
FIRST_CHUNK = 64
MAX_CHUNK = 32768
PAIR_BLOCK = 200_000
EMBED_SLACK = 1e-9


class UncoveredCellWarning(UserWarning):
    """Some cells of the cover grid received no sample."""


@dataclass(frozen=True)
class PressureConfig:
    """Schedule and sampling parameters.

    ``leaf_window`` is the length, in units of ``eps``, of the unstable arc
    sampled on the Bolza surface.  ``cover_cells`` (cells per chart axis)
    overrides ``cover_diameter`` when set.
    """

    epsilon_list: tuple = (0.2, 0.1, 0.05)
    T_list: tuple = (2, 4, 6, 8)
    delta: float = 0.25
    sample_budget: int = 400_000
    seed: int = 0
    leaf_window: float = 20.0
    cover_diameter: float = 0.15
    cover_cells: int | None = None
    cover_overlap: float = 0.1

    def __post_init__(self):
        eps = tuple(float(e) for e in np.atleast_1d(self.epsilon_list))
        ts = tuple(np.atleast_1d(self.T_list).tolist())
        object.__setattr__(self, "epsilon_list", eps)
        object.__setattr__(self, "T_list", ts)
        if not eps or any(not e > 0 for e in eps):
            raise InvalidInputError(f"epsilon_list must hold positive values, got {eps}")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise InvalidInputError(f"epsilon_list must be strictly descending, got {eps}")
        if not ts or any(int(t) != t or t < 1 for t in ts):
            raise InvalidInputError(f"T_list must hold positive integers, got {ts}")
        object.__setattr__(self, "T_list", tuple(int(t) for t in ts))
        if any(a >= b for a, b in zip(self.T_list, self.T_list[1:])):
            raise InvalidInputError(f"T_list must be strictly ascending, got {ts}")
        if not 0 < self.delta < 0.5:
            raise InvalidInputError(f"delta must lie in (0, 1/2), got {self.delta}")
        if self.sample_budget < MIN_SAMPLE_BUDGET:
            raise InvalidInputError(f"sample budget must be >= {MIN_SAMPLE_BUDGET}, got {self.sample_budget}")
        if not self.leaf_window > 0:
            raise InvalidInputError("leaf_window must be positive")
        if not self.cover_diameter > 0:
            raise InvalidInputError("cover_diameter must be positive")
        if self.cover_cells is not None and self.cover_cells < 1:
            raise InvalidInputError("cover_cells must be >= 1")
        if not 0 <= self.cover_overlap < 0.5:
            raise InvalidInputError("cover_overlap must lie in [0, 1/2)")


@dataclass(frozen=True)
class CoverWord:
    symbols: tuple
    coarse_sum: float
    support: int


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    method: str
    params: dict
    z_value: float = math.nan
    error_bar: float = math.nan
    table: tuple = field(default=(), repr=False)
    words: tuple = field(default=(), repr=False)

    def table_rows(self) -> list:
        """Rows for the pressure table export: the per-cell estimates, then this one if it is not a cell."""
        rows = list(self.table)
        if not any(row is self or (row.params == self.params and row.value == self.value) for row in rows):
            rows.append(self)
        return rows


@dataclass(frozen=True)
class GapVerdict:
    pressure: float
    margin: float
    threshold: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "pressure": self.pressure,
            "margin": self.margin,
            "threshold": self.threshold,
            "satisfied": self.satisfied,
        }


# ---------------------------------------------------------------------------
# Bowen metric


def bowen_times(space, T: int) -> np.ndarray:
    if space.continuous:
        return np.round(np.arange(0, int(round(T / 0.1)) + 1) * 0.1, 10)
    return np.arange(T + 1, dtype=float)


def _checkpoints(times: np.ndarray) -> np.ndarray:
    if len(times) <= 9:
        return times
    return times[np.unique(np.linspace(0, len(times) - 1, 9).round().astype(int))]


def _lifted_advance(space, states, t):
    if isinstance(space, BolzaFlow):
        return space.advance_lifted(states, t)
    return space.advance(states, t)


def _embedding(space, states, times):
    if isinstance(space, BolzaFlow):
        center = states[0]
        cols = []
        for t in times:
            ref = hyp.sl2_inverse(center @ hyp.geodesic_matrix(t))
            cols.append(hyp.sl2_log_coordinates(ref @ space.advance_lifted(states, t)))
        return np.hstack(cols), None
    return space.embedding(states, times)


def bowen_distance(space, s1, s2, times) -> np.ndarray:
    """``max_t d(Phi^t s1, Phi^t s2)`` over the time grid, pairwise along rows."""
    out = np.zeros(len(s1))
    for t in times:
        d = space.distance(_lifted_advance(space, s1, t), _lifted_advance(space, s2, t))
        out = np.maximum(out, d)
    return out


def _close_pairs(space, states, ii, jj, times, eps):
    """Subset of candidate pairs whose Bowen distance is ``<= eps``."""
    keep = np.zeros(len(ii), dtype=bool)
    for lo in range(0, len(ii), PAIR_BLOCK):
        sl = slice(lo, lo + PAIR_BLOCK)
        keep[sl] = bowen_distance(space, states[ii[sl]], states[jj[sl]], times) <= eps
    return ii[keep], jj[keep]


def _tree(points, box):
    if box is None:
        return cKDTree(points)
    return cKDTree(np.mod(points, box), boxsize=box)


def _ball_pairs(tree, points, radius, k=8):
    """All (query row, tree index) pairs within ``radius`` (sup norm), via bounded kNN."""
    rows_out, cols_out = [], []
    todo = np.arange(len(points))
    while todo.size:
        k = min(k, tree.n)
        dist, nbr = tree.query(points[todo], k=k, p=np.inf, distance_upper_bound=radius)
        dist = dist.reshape(len(todo), k)
        nbr = nbr.reshape(len(todo), k)
        hit = np.isfinite(dist)
        full = hit[:, -1] if k < tree.n else np.zeros(len(todo), dtype=bool)
        r, c = np.nonzero(hit & ~full[:, None])
        rows_out.append(todo[r])
        cols_out.append(nbr[r, c])
        todo = todo[full]
        k *= 4
    return np.concatenate(rows_out), np.concatenate(cols_out)


def separated_subset(space, states, eps: float, T: int) -> np.ndarray:
    """Indices of a maximal ``(eps, T)``-separated subset, greedy in sample order.

    A sample is kept when its Bowen distance to every kept sample exceeds
    ``eps``.  Candidates are found with a KD-tree on the coordinates of the
    orbit at a few checkpoint times (a necessary condition for closeness) and
    confirmed on the full Bowen time grid.  Samples are processed in chunks of
    doubling size so that most are discarded against the already kept set.
    """
    space = phase_space(space)
    times = bowen_times(space, T)
    emb, box = _embedding(space, states, _checkpoints(times))
    if box is not None:
        emb = np.mod(emb, box)
    radius = eps * (1 + EMBED_SLACK) + EMBED_SLACK
    n = len(states)
    kept: list[np.ndarray] = []
    pos, chunk = 0, FIRST_CHUNK
    while pos < n:
        idx = np.arange(pos, min(n, pos + chunk))
        pos += chunk
        chunk = min(2 * chunk, MAX_CHUNK)
        if kept:
            acc = np.concatenate(kept)
            qi, qj = _ball_pairs(_tree(emb[acc], box), emb[idx], radius)
            if qi.size:
                ii, _ = _close_pairs(space, states, idx[qi], acc[qj], times, eps)
                idx = idx[~np.isin(idx, ii)]
        if idx.size == 0:
            continue
        pairs = _tree(emb[idx], box).query_pairs(radius, p=np.inf, output_type="ndarray")
        if len(pairs):
            a, b = _close_pairs(space, states, idx[pairs[:, 0]], idx[pairs[:, 1]], times, eps)
        else:
            a = b = np.empty(0, dtype=int)
        kept.append(_greedy_independent(idx, a, b))
    return np.sort(np.concatenate(kept))


def _greedy_independent(idx, a, b):
    """Greedy independent set of the conflict graph, scanning ``idx`` in order."""
    if a.size == 0:
        return idx
    local = {v: k for k, v in enumerate(idx.tolist())}
    la = np.fromiter((local[v] for v in a.tolist()), dtype=int, count=a.size)
    lb = np.fromiter((local[v] for v in b.tolist()), dtype=int, count=b.size)
    m = len(idx)
    graph = csr_matrix((np.ones(2 * la.size, dtype=bool), (np.r_[la, lb], np.r_[lb, la])), shape=(m, m))
    indptr, indices = graph.indptr, graph.indices
    blocked = np.zeros(m, dtype=bool)
    chosen = np.zeros(m, dtype=bool)
    for k in range(m):
        if not blocked[k]:
            chosen[k] = True
            blocked[indices[indptr[k] : indptr[k + 1]]] = True
    return idx[chosen]


# ---------------------------------------------------------------------------
# sampling


def _leaf_arc(space, n, rng, length):
    center = space.sample(1, rng)[0]
    u = rng.random(n) * length
    u[0] = 0.0
    return center @ hyp.unstable_matrix(u)


def pressure_samples(space, n: int, rng, eps: float, cfg: PressureConfig):
    """Sample set for one ``(eps, T)`` cell (an unstable arc on the Bolza surface)."""
    if isinstance(space, BolzaFlow):
        return _leaf_arc(space, n, rng, cfg.leaf_window * eps)
    return space.sample(n, rng)


def _cell_rng(cfg, i_eps, i_t):
    return np.random.default_rng([cfg.seed, i_eps, i_t])


# ---------------------------------------------------------------------------
# separated sets


def _separated_cell(space, f, cfg, i_eps, i_t):
    eps = cfg.epsilon_list[i_eps]
    T = cfg.T_list[i_t]
    states = pressure_samples(space, cfg.sample_budget, _cell_rng(cfg, i_eps, i_t), eps, cfg)
    kept = separated_subset(space, states, eps, T)
    base = separated_subset(space, states, eps, 0)
    sums = birkhoff_sums(space, f, states[kept], T)
    log_z = float(logsumexp(sums))
    # dividing by the time-zero count removes the eps-dependent prefactor
    value = (log_z - math.log(len(base))) / T
    params = {
        "eps": eps,
        "T": T,
        "n_samples": int(len(states)),
        "n_separated": int(len(kept)),
        "n_base": int(len(base)),
    }
    return PressureEstimate(value, "separated", params, z_value=log_z / T)


def pressure_separated(dynamics, f, cfg: PressureConfig) -> PressureEstimate:
    """Separated-set estimate at the finest cell ``(min eps, max T)`` with the full table.

    ``value = (log sum_{S_T} e^{S_T f} - log |S_0|) / T``; ``z_value`` keeps the
    raw ``log Z / T``.
    """
    space = phase_space(dynamics)
    f = _as_field(f)
    table = tuple(
        _separated_cell(space, f, cfg, i, j) for i in range(len(cfg.epsilon_list)) for j in range(len(cfg.T_list))
    )
    head = table[-1]
    return PressureEstimate(head.value, "separated", dict(head.params), head.z_value, math.nan, table)


def pressure_schedule(dynamics, f, cfg: PressureConfig) -> PressureEstimate:
    """Extrapolate separated-set values to ``T -> inf`` at the smallest ``eps``.

    Fits ``value = P + b / T`` by least squares; the intercept ``P`` is the
    estimate and the RMS residual of the fit is the error bar.
    """
    if len(cfg.T_list) < 2:
        raise InvalidInputError(f"the schedule needs at least two values of T, got {cfg.T_list}")
    est = pressure_separated(dynamics, f, cfg)
    finest = [row for row in est.table if row.params["eps"] == cfg.epsilon_list[-1]]
    usable = [row for row in finest if np.isfinite(row.value)]
    if len(usable) < 2:
        raise NumericalError("degenerate extrapolation: fewer than two usable T values")
    inv_t = np.array([1.0 / row.params["T"] for row in usable])
    vals = np.array([row.value for row in usable])
    slope, intercept = np.polyfit(inv_t, vals, 1)
    resid = vals - (intercept + slope * inv_t)
    error = float(np.sqrt(np.mean(resid**2)))
    params = {"eps": cfg.epsilon_list[-1], "T": "extrapolated", "slope": float(slope), "T_list": list(cfg.T_list)}
    return PressureEstimate(float(intercept), "schedule", params, est.z_value, error, est.table)


# ---------------------------------------------------------------------------
# covers


def _chart(space, states):
    """Chart coordinates, bounds, periodicity and metric scale for the cover grid."""
    if isinstance(space, DoublingMap):
        return states[:, None], np.zeros(1), np.ones(1), np.array([True]), np.ones(1)
    if isinstance(space, FlatGeodesicFlow):
        d = space.dim
        x = states[:, :d]
        if d == 1:
            side = (states[:, 1:2] > 0).astype(float)
            coords = np.hstack([x, side])
            return coords, np.zeros(2), np.array([space.periods[0], 2.0]), np.array([True, False]), np.array([1.0, 0.0])
        theta = np.mod(np.arctan2(states[:, 3], states[:, 2]), 2 * np.pi)[:, None]
        coords = np.hstack([x, theta])
        hi = np.array([*space.periods, 2 * np.pi])
        return coords, np.zeros(3), hi, np.array([True, True, True]), np.ones(3)
    if isinstance(space, BolzaFlow):
        coords = hyp.frame_coordinates(hyp.reduce_fundamental_domain(states))
        r = np.tanh(hyp.CIRCUMRADIUS / 2) + 1e-9
        return (
            coords,
            np.array([-r, -r, 0.0]),
            np.array([r, r, 2 * np.pi]),
            np.array([False, False, True]),
            np.array([2.0, 2.0, 1.0]),
        )
    raise InvalidInputError(f"no cover chart for {type(space).__name__}")


def _grid_shape(lo, hi, scale, cfg):
    m = int(np.count_nonzero(scale))
    if cfg.cover_cells is not None:
        cells = np.full(len(lo), int(cfg.cover_cells))
    else:
        side = cfg.cover_diameter / math.sqrt(max(m, 1))
        cells = np.maximum(1, np.ceil((hi - lo) * scale / side)).astype(int)
    # discrete axes (scale 0) get one cell per value
    cells = np.where(scale == 0, np.round(hi - lo).astype(int), cells)
    return cells


def _memberships(coords, lo, hi, periodic, cells, overlap):
    """Primary flat cell index and alternative cells from the overlap margin."""
    width = (hi - lo) / cells
    rel = (coords - lo) / width
    prim = np.floor(rel).astype(int)
    prim = np.where(periodic, np.mod(prim, cells), np.clip(prim, 0, cells - 1))
    frac = rel - np.floor(rel)
    options = []
    for ax in range(coords.shape[1]):
        lower = frac[:, ax] < overlap
        upper = frac[:, ax] > 1 - overlap
        alt = np.where(lower, prim[:, ax] - 1, np.where(upper, prim[:, ax] + 1, -1))
        if periodic[ax]:
            alt = np.where(alt == -1, -1, np.mod(alt, cells[ax]))
            alt = np.where(lower | upper, alt, -1)
        else:
            alt = np.where((alt >= 0) & (alt < cells[ax]) & (lower | upper), alt, -1)
        options.append(alt)
    flat = np.ravel_multi_index(prim.T, cells)
    alts = []
    for ax, alt in enumerate(options):
        rows = np.flatnonzero(alt >= 0)
        moved = prim[rows].copy()
        moved[:, ax] = alt[rows]
        alts.append((rows, np.ravel_multi_index(moved.T, cells)))
    return flat, alts


def _row_keys(words):
    words = np.ascontiguousarray(words)
    return words.view(np.dtype((np.void, words.dtype.itemsize * words.shape[1]))).ravel()


def cover_words(space, states, T: int, cfg: PressureConfig):
    """Primary itineraries and the sample-to-word coverage relation.

    Returns ``(words, primary, cover_rows, cover_cols, n_cells, empty_cells)``
    where ``words`` are the distinct primary itineraries, ``primary[i]`` the
    word of sample ``i`` and ``(cover_rows, cover_cols)`` all (sample, word)
    incidences, including words reached by moving a single time position into
    an overlapping neighbour cell.
    """
    itin = []
    alts_per_time = []
    current = states
    n_cells = empty = None
    for k in range(T):
        coords, lo, hi, periodic, scale = _chart(space, current)
        cells = _grid_shape(lo, hi, scale, cfg)
        flat, alts = _memberships(coords, lo, hi, periodic, cells, cfg.cover_overlap)
        itin.append(flat)
        alts_per_time.append(alts)
        if k == 0:
            n_cells = int(np.prod(cells))
            empty = n_cells - len(np.unique(flat))
        if k < T - 1:
            current = space.advance(current, 1)
    itin = np.column_stack(itin).astype(np.int64)
    keys = _row_keys(itin)
    uniq_keys, first, primary = np.unique(keys, return_index=True, return_inverse=True)
    words = itin[first]
    rows = [np.arange(len(states))]
    cols = [primary]
    for k, alts in enumerate(alts_per_time):
        for sample_rows, cell in alts:
            if sample_rows.size == 0:
                continue
            variant = itin[sample_rows].copy()
            variant[:, k] = cell
            vk = _row_keys(variant)
            pos = np.searchsorted(uniq_keys, vk)
            pos = np.minimum(pos, len(uniq_keys) - 1)
            hit = uniq_keys[pos] == vk
            rows.append(sample_rows[hit])
            cols.append(pos[hit])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    pair = np.unique(np.column_stack([rows, cols]), axis=0)
    return words, primary, pair[:, 0], pair[:, 1], n_cells, empty


def greedy_subcover(weights_log, rows, cols, n_samples):
    """Greedy weighted set cover; minimises ``e^{weight}`` per newly covered sample.

    ``weights_log[w]`` is the log-weight of set ``w``; ``(rows, cols)`` lists
    element-set incidences.  Returns the indices of the chosen sets.
    """
    n_sets = len(weights_log)
    incidence = csr_matrix((np.ones(len(rows), dtype=bool), (cols, rows)), shape=(n_sets, n_samples))
    indptr, indices = incidence.indptr, incidence.indices
    covered = np.zeros(n_samples, dtype=bool)
    sizes = np.diff(indptr)
    # key: log cost per element = weight - log(new count)
    heap = [(weights_log[w] - math.log(sizes[w]), w) for w in range(n_sets) if sizes[w] > 0]
    heapq.heapify(heap)
    chosen = []
    remaining = n_samples
    while heap and remaining > 0:
        key, w = heapq.heappop(heap)
        members = indices[indptr[w] : indptr[w + 1]]
        fresh = int(np.count_nonzero(~covered[members]))
        if fresh == 0:
            continue
        new_key = weights_log[w] - math.log(fresh)
        if heap and new_key > heap[0][0] + 1e-15:
            heapq.heappush(heap, (new_key, w))
            continue
        chosen.append(w)
        covered[members] = True
        remaining -= fresh
    return np.asarray(chosen, dtype=int)


def pressure_cover(dynamics, f, cfg: PressureConfig) -> PressureEstimate:
    """Refined-cover estimate ``(1/T) log sum_{W in subcover} e^{<f>_{T,W}}``.

    Uses the finest ``eps`` (for the Bolza arc length) and the largest ``T``
    of ``cfg``.  On the Bolza surface the sampled arc has the length of one
    cell, so that a single word covers it at ``T = 1``.
    """
    space = phase_space(dynamics)
    f = _as_field(f)
    T = cfg.T_list[-1]
    rng = np.random.default_rng([cfg.seed, 1_000_003])
    if isinstance(space, BolzaFlow):
        states = _leaf_arc(space, cfg.sample_budget, rng, cfg.cover_diameter / math.sqrt(3))
    else:
        states = space.sample(cfg.sample_budget, rng)
    words, primary, rows, cols, n_cells, empty = cover_words(space, states, T, cfg)
    if empty and not isinstance(space, BolzaFlow):
        warnings.warn(f"{empty} of {n_cells} cover cells contain no sample", UncoveredCellWarning, stacklevel=2)
    sums = birkhoff_sums(space, f, states, T)
    coarse = np.full(len(words), -np.inf)
    np.maximum.at(coarse, cols, sums[rows])
    support = np.bincount(primary, minlength=len(words))
    chosen = greedy_subcover(coarse, rows, cols, len(states))
    log_z = float(logsumexp(coarse[chosen]))
    selected = tuple(CoverWord(tuple(words[w].tolist()), float(coarse[w]), int(support[w])) for w in chosen)
    params = {
        "T": T,
        "diameter": cfg.cover_diameter,
        "cells": n_cells,
        "empty_cells": int(empty),
        "n_words": int(len(words)),
        "n_selected": int(len(chosen)),
        "n_samples": int(len(states)),
    }
    return PressureEstimate(log_z / T, "cover", params, z_value=log_z / T, words=selected)


# ---------------------------------------------------------------------------
# transfer operator


def pressure_transfer(adjacency, word_weights, tol: float = 1e-12, max_iter: int = 1_000_000) -> PressureEstimate:
    """``log lambda_max`` of ``A_ij e^{w_j}`` by power iteration.

    The iteration runs on ``I + M``, which is primitive whenever ``M`` is
    irreducible, so periodic shifts converge too.
    """
    A = np.asarray(adjacency)
    w = np.asarray(word_weights, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"adjacency must be square, got shape {A.shape}")
    if not np.all((A == 0) | (A == 1)):
        raise InvalidInputError("adjacency must be a 0/1 matrix")
    if w.shape != (A.shape[0],):
        raise InvalidInputError(f"need one weight per symbol ({A.shape[0]}), got shape {w.shape}")
    n_comp, labels = connected_components(csr_matrix(A), directed=True, connection="strong")
    if n_comp > 1:
        reach = _reachable(A, 0)
        missing = np.flatnonzero(~reach)
        if missing.size == 0:
            missing = np.flatnonzero(labels != labels[0])
            raise InvalidInputError(f"adjacency is reducible: state 0 is unreachable from states {missing.tolist()}")
        raise InvalidInputError(f"adjacency is reducible: states {missing.tolist()} are unreachable from state 0")
    shift = float(np.max(w))
    M = A * np.exp(w - shift)[None, :]
    v = np.full(len(w), 1.0 / len(w))
    lam = 0.0
    for it in range(max_iter):
        nxt = v + M @ v
        new_lam = float(np.sum(nxt))
        nxt /= new_lam
        if abs(new_lam - lam) <= tol * new_lam and np.max(np.abs(nxt - v)) <= tol:
            v, lam = nxt, new_lam
            break
        v, lam = nxt, new_lam
    else:
        raise NumericalError(f"power iteration did not reach {tol} in {max_iter} steps")
    value = math.log(lam - 1.0) + shift
    params = {"size": int(len(w)), "iterations": it + 1}
    return PressureEstimate(value, "transfer", params, z_value=value, error_bar=0.0)


def _reachable(A, start):
    seen = np.zeros(len(A), dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(A[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = nxt.tolist()
    return seen


def enumerate_words(adjacency, word_weights, T: int) -> float:
    """``(1/T) log`` of the sum of ``e^{weight}`` over all admissible words of length ``T``."""
    A = np.asarray(adjacency)
    w = np.asarray(word_weights, dtype=float)
    k = len(w)
    words = np.array(np.meshgrid(*[np.arange(k)] * T, indexing="ij")).reshape(T, -1).T
    ok = np.ones(len(words), dtype=bool)
    for j in range(T - 1):
        ok &= A[words[:, j], words[:, j + 1]] == 1
    weights = w[words[ok]].sum(axis=1)
    return float(logsumexp(weights)) / T


# ---------------------------------------------------------------------------
# gap condition


def gap_condition(est, margin: float) -> GapVerdict:
    """Evaluate ``Pr + margin < 0``."""
    value = est.value if isinstance(est, PressureEstimate) else float(est)
    if not np.isfinite(value):
        raise InvalidInputError(f"pressure estimate must be finite, got {value}")
    if not margin > 0:
        raise InvalidInputError(f"margin must be positive, got {margin}")
    threshold = value + margin
    return GapVerdict(float(value), float(margin), float(threshold), bool(threshold < 0))


def closed_form_pressure(a0: float) -> PressureEstimate:
    """``Pr(a^u) = 1/2 - a0`` for constant damping on a curvature -1 surface."""
    return PressureEstimate(0.5 - a0, "closed_form", {"a0": a0}, z_value=0.5 - a0, error_bar=0.0)
