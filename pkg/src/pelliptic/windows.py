"""Sums and maxima over Euclidean windows on row-structured periodic grids.

Data live on rows (fixed x0) of a lateral torus with ``M`` nodes per
lateral direction.  A window is a union of lateral balls, one per source
row, attached to a target.  Each lateral ball is decomposed into intervals
along the last lateral axis, so a window is a list of
``(target, source row, leading lateral offsets, half width)`` records.

Lateral offsets are taken in the periodic extension: an interval longer
than the period covers some nodes several times, and sums count them with
multiplicity.  Maxima are unaffected by multiplicity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

#: relative slack used to decide strict inequalities |d| < radius on the grid
STRICT_SLACK = 1e-10

_CHUNK = 1 << 21


def lateral_intervals(radius_sq: np.ndarray, mesh: float, lateral_dims: int):
    """Decompose strict lateral balls |d*mesh| < radius into last-axis intervals.

    Returns ``(owner, leads, half)`` where ``owner`` indexes the input
    radius, ``leads`` holds offsets along the leading lateral axes and
    ``half`` is the half width along the last axis.  Empty balls vanish.
    """
    radius_sq = np.asarray(radius_sq, dtype=float)
    owner = np.arange(radius_sq.size)
    rem = radius_sq.copy()
    leads = np.zeros((radius_sq.size, 0), dtype=np.int64)
    keep = rem > 0
    owner, rem, leads = owner[keep], rem[keep], leads[keep]
    for _ in range(lateral_dims - 1):
        reach = _half_width(rem, mesh)
        ok = reach >= 0
        owner, rem, leads, reach = owner[ok], rem[ok], leads[ok], reach[ok]
        counts = 2 * reach + 1
        rep = np.repeat(np.arange(owner.size), counts)
        starts = np.cumsum(counts) - counts
        d = np.arange(rep.size) - starts[rep] - reach[rep]
        owner, leads = owner[rep], np.concatenate([leads[rep], d[:, None]], axis=1)
        rem = rem[rep] - (d * mesh) ** 2
    half = _half_width(rem, mesh)
    ok = half >= 0
    return owner[ok], leads[ok], half[ok]


def _half_width(radius_sq: np.ndarray, mesh: float) -> np.ndarray:
    """Largest integer d with (d*mesh)^2 < radius_sq, or -1 when none."""
    x = np.sqrt(np.maximum(radius_sq, 0.0) * (1.0 - STRICT_SLACK)) / mesh
    d = np.ceil(x).astype(np.int64) - 1
    d[radius_sq <= 0] = -1
    return d


@dataclass
class WindowReducer:
    """Precomputed window lists for repeated sums/maxima over row data."""

    targets: np.ndarray
    sources: np.ndarray
    leads: np.ndarray
    half: np.ndarray
    n_targets: int
    lateral_count: int
    lateral_dims: int

    def __post_init__(self):
        order = np.argsort(self.targets, kind="stable")
        self.targets = np.asarray(self.targets)[order]
        self.sources = np.asarray(self.sources)[order]
        self.leads = np.asarray(self.leads, dtype=np.int64).reshape(len(order), self.lateral_dims - 1)[order]
        self.half = np.asarray(self.half)[order]

    @property
    def output_shape(self):
        return (self.n_targets,) + (self.lateral_count,) * self.lateral_dims

    def counts(self) -> np.ndarray:
        """Number of (multiplicity-counted) nodes in each target window."""
        out = np.zeros(self.n_targets)
        np.add.at(out, self.targets, 2 * self.half + 1)
        return out

    def _lead_index(self, sel, lead_axis):
        M, L = self.lateral_count, self.lateral_dims
        shape = [sel.size] + [1] * L
        shape[1 + lead_axis] = M
        idx = (np.arange(M)[None, :] + self.leads[sel, lead_axis][:, None]) % M
        return idx.reshape(shape)

    def _chunks(self, per_window: int):
        size = max(1, _CHUNK // max(per_window, 1))
        W = self.targets.size
        for start in range(0, W, size):
            yield np.arange(start, min(W, start + size))

    def sum(self, data: np.ndarray) -> np.ndarray:
        """Windowed sums of ``data`` (shape (rows, M, ..., M))."""
        M, L = self.lateral_count, self.lateral_dims
        data = np.asarray(data)
        C = np.zeros(data.shape[:-1] + (M + 1,), dtype=data.dtype)
        np.cumsum(data, axis=-1, out=C[..., 1:])
        total = C[..., M]
        out = np.zeros(self.output_shape, dtype=data.dtype)
        k = np.arange(M)
        for sel in self._chunks(M**L):
            src = self.sources[sel].reshape([-1] + [1] * L)
            lead_idx = tuple(self._lead_index(sel, i) for i in range(L - 1))
            hw = self.half[sel].reshape([-1] + [1] * L)
            hi = k + hw + 1
            lo = k - hw

            def F(t):
                return (t // M) * total[(src,) + lead_idx] + C[(src,) + lead_idx + (t % M,)]

            vals = F(hi) - F(lo)
            _accumulate(out, self.targets[sel], vals, np.add)
        return out

    def max(self, data: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Windowed maxima of real ``data``; empty windows give ``fill``."""
        M, L = self.lateral_count, self.lateral_dims
        data = np.asarray(data, dtype=float)
        out = np.full(self.output_shape, -np.inf)
        for width in np.unique(self.half):
            group = np.nonzero(self.half == width)[0]
            size = 2 * int(width) + 1
            if size >= M:
                filtered = np.broadcast_to(data.max(axis=-1, keepdims=True), data.shape)
            else:
                filtered = maximum_filter1d(data, size=size, axis=-1, mode="wrap")
            rows = np.unique(self.sources[group])
            filtered = np.ascontiguousarray(filtered[rows]) if rows.size < data.shape[0] else filtered
            remap = np.searchsorted(rows, self.sources) if rows.size < data.shape[0] else None
            step = max(1, _CHUNK // M**L)
            for start in range(0, group.size, step):
                sel = group[start:start + step]
                src = (remap[sel] if remap is not None else self.sources[sel]).reshape([-1] + [1] * L)
                lead_idx = tuple(self._lead_index(sel, i) for i in range(L - 1))
                last = np.arange(M).reshape([1] * L + [M])
                vals = filtered[(src,) + lead_idx + (last,)]
                _accumulate(out, self.targets[sel], vals, np.maximum)
        out[np.isneginf(out)] = fill
        return out


def _accumulate(out, targets, vals, ufunc):
    """Reduce ``vals`` by sorted ``targets`` into ``out`` with ``ufunc``."""
    if targets.size == 0:
        return
    starts = np.concatenate([[0], np.nonzero(np.diff(targets))[0] + 1])
    partial = ufunc.reduceat(vals, starts, axis=0)
    tgt = targets[starts]
    out[tgt] = ufunc(out[tgt], partial)


def ball_reducer(target_x0, radii, source_x0, mesh_lateral, lateral_count, lateral_dims):
    """Windows for open balls of given radii centred on target rows.

    Ball membership is (x0_s - x0_t)^2 + |d|^2 < r^2 with d the lateral
    offset in the periodic extension.
    """
    target_x0 = np.asarray(target_x0, dtype=float)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), target_x0.shape)
    source_x0 = np.asarray(source_x0, dtype=float)
    tt, ss = [], []
    rsq = []
    for t, (x, r) in enumerate(zip(target_x0, radii)):
        rem = r * r - (source_x0 - x) ** 2
        idx = np.nonzero(rem > STRICT_SLACK * r * r)[0]
        tt.append(np.full(idx.size, t))
        ss.append(idx)
        rsq.append(rem[idx])
    tt = np.concatenate(tt) if tt else np.zeros(0, int)
    ss = np.concatenate(ss) if ss else np.zeros(0, int)
    rsq = np.concatenate(rsq) if rsq else np.zeros(0)
    owner, leads, half = lateral_intervals(rsq, mesh_lateral, lateral_dims)
    return WindowReducer(tt[owner], ss[owner], leads, half, target_x0.size, lateral_count, lateral_dims)


def cone_reducer(source_x0, aperture, truncation, mesh_lateral, lateral_count, lateral_dims, row_mask=None):
    """Windows for the cones {a*y0 > |y' - Q'|, 0 < y0 <= truncation} with one target."""
    source_x0 = np.asarray(source_x0, dtype=float)
    valid = (source_x0 > 0) & (source_x0 <= truncation * (1 + 1e-12))
    if row_mask is not None:
        valid &= row_mask
    rows = np.nonzero(valid)[0]
    owner, leads, half = lateral_intervals((aperture * source_x0[rows]) ** 2, mesh_lateral, lateral_dims)
    return WindowReducer(np.zeros(owner.size, int), rows[owner], leads, half, 1, lateral_count, lateral_dims)
