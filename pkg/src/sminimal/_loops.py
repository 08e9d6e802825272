"""Compiled pair loops over a kernel stencil.

All loops work on arrays padded by the stencil radius and flattened in C
order, so a pair ``(i, j)`` is a cell ``i`` and ``j = i + offset_k``. Results
are returned per row; callers reduce rows with ``np.sum`` (pairwise
summation), which keeps totals deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np


@dataclass(frozen=True)
class Layout:
    """Padded flat indexing for one kernel table."""

    margin: int
    padded_shape: tuple[int, ...]
    offsets: np.ndarray  # flat offsets of nonzero stencil entries
    weights: np.ndarray
    omega_flat: np.ndarray  # flat indices of omega cells (row-major order)
    omega_padded: np.ndarray  # bool, flat padded

    def flat_index(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, len(self.padded_shape)) + self.margin
        return np.ravel_multi_index(tuple(idx.T), self.padded_shape).astype(np.int64)

    def pad(self, box_values: np.ndarray, fill) -> np.ndarray:
        """Box array padded by ``margin``; ``fill`` is a scalar or a full padded array."""
        m = self.margin
        if np.ndim(fill) == 0:
            out = np.full(self.padded_shape, fill, dtype=np.asarray(box_values).dtype)
        else:
            out = np.array(fill, dtype=np.asarray(box_values).dtype)
        inner = tuple(slice(m, m + n) for n in np.shape(box_values))
        out[inner] = box_values
        return out.ravel()

    @property
    def size(self) -> int:
        return int(np.prod(self.padded_shape))


def layout(kt) -> Layout:
    """Layout for ``kt`` (cached on the table)."""
    cache = kt._cache
    if "layout" not in cache:
        m = kt.radius_cells
        shape = tuple(n + 2 * m for n in kt.grid.shape)
        offs, w = kt.nonzero()
        strides = np.array([int(np.prod(shape[a + 1 :])) for a in range(len(shape))], dtype=np.int64)
        flat_offs = (offs.astype(np.int64) * strides).sum(axis=1)
        lay0 = Layout(m, shape, flat_offs, np.ascontiguousarray(w), np.empty(0, np.int64), np.empty(0, bool))
        om_flat = lay0.flat_index(kt.omega.indices())
        om_pad = np.zeros(lay0.size, bool)
        om_pad[om_flat] = True
        cache["layout"] = Layout(m, shape, flat_offs, lay0.weights, om_flat, om_pad)
    return cache["layout"]


@nb.njit(cache=True)
def energy_rows(cells, values, in_omega, offsets, weights):
    """Row ``r``: sum of ``w |u_i - u_j|`` over partners of cell ``i = cells[r]``.

    Pairs with both ends in omega are counted once (at the smaller flat index).
    """
    n = cells.shape[0]
    out = np.zeros(n)
    for r in range(n):
        i = cells[r]
        ui = values[i]
        acc = 0.0
        for k in range(offsets.shape[0]):
            j = i + offsets[k]
            if in_omega[j] and j < i:
                continue
            acc += weights[k] * abs(ui - values[j])
        out[r] = acc
    return out


@nb.njit(cache=True)
def weighted_rows(cells, field, offsets, weights):
    """Row ``r``: sum of ``w_k * field[i + offset_k]`` for ``i = cells[r]``."""
    n = cells.shape[0]
    out = np.zeros(n)
    for r in range(n):
        i = cells[r]
        acc = 0.0
        for k in range(offsets.shape[0]):
            acc += weights[k] * field[i + offsets[k]]
        out[r] = acc
    return out


def interaction_sum(cells, field, offsets, weights) -> float:
    return float(np.sum(weighted_rows(cells, np.ascontiguousarray(field, dtype=float), offsets, weights)))


@nb.njit(cache=True)
def terminal_rows(cells, state, offsets, weights):
    """Capacities of free cells to the source (state 1) and sink (state 2) sides."""
    n = cells.shape[0]
    src = np.zeros(n)
    snk = np.zeros(n)
    for r in range(n):
        i = cells[r]
        a = 0.0
        b = 0.0
        for k in range(offsets.shape[0]):
            st = state[i + offsets[k]]
            if st == 1:
                a += weights[k]
            elif st == 2:
                b += weights[k]
        src[r] = a
        snk[r] = b
    return src, snk


@nb.njit(cache=True)
def set_cut_scatter(cells, in_set, in_omega, exterior, offsets, weights, size):
    """For a set ``E`` of omega cells (``in_set`` flat padded) return
    ``L(E, omega minus E)`` and, for every exterior cell, its coupling to ``E``
    (``a``) and to ``omega minus E`` (``b``)."""
    a = np.zeros(size)
    b = np.zeros(size)
    rows = np.zeros(cells.shape[0])
    for r in range(cells.shape[0]):
        i = cells[r]
        ei = in_set[i]
        acc = 0.0
        for k in range(offsets.shape[0]):
            j = i + offsets[k]
            w = weights[k]
            if exterior[j]:
                if ei:
                    a[j] += w
                else:
                    b[j] += w
            elif in_omega[j] and ei and not in_set[j]:
                acc += w
        rows[r] = acc
    return rows, a, b


@nb.njit(cache=True)
def dense_block(coords, stencil, radius):
    """Symmetric weight matrix among cells with integer ``coords`` (n x dim)."""
    n = coords.shape[0]
    dim = coords.shape[1]
    out = np.zeros((n, n))
    for p in range(n):
        for q in range(p + 1, n):
            if dim == 1:
                d0 = coords[q, 0] - coords[p, 0]
                if abs(d0) > radius:
                    continue
                w = stencil.ravel()[d0 + radius]
            else:
                d0 = coords[q, 0] - coords[p, 0]
                d1 = coords[q, 1] - coords[p, 1]
                if abs(d0) > radius or abs(d1) > radius:
                    continue
                w = stencil[d0 + radius, d1 + radius]
            out[p, q] = w
            out[q, p] = w
    return out


def dense_pairs(coords: np.ndarray, stencil: np.ndarray, radius: int) -> np.ndarray:
    st = np.ascontiguousarray(stencil)
    if st.ndim == 1:
        st = st.reshape(-1, 1)
    return dense_block(np.ascontiguousarray(coords, dtype=np.int64), st, radius)


@nb.njit(cache=True)
def smoothed_value_grad(u, W, ext_vals, ext_W, far_w, far_value, eps):
    """Value and gradient of sum w * sqrt(d^2 + eps^2) over the omega pair domain.

    ``W`` couples omega cells, ``ext_W[i, c]`` couples omega cell ``i`` to the
    exterior value class ``ext_vals[c]`` and ``far_w[i]`` to the far value.
    """
    n = u.shape[0]
    g = np.zeros(n)
    f = 0.0
    e2 = eps * eps
    for i in range(n):
        ui = u[i]
        gi = 0.0
        for j in range(i + 1, n):
            w = W[i, j]
            if w == 0.0:
                continue
            d = ui - u[j]
            r = np.sqrt(d * d + e2)
            f += w * r
            t = w * d / r
            gi += t
            g[j] -= t
        for c in range(ext_vals.shape[0]):
            w = ext_W[i, c]
            if w == 0.0:
                continue
            d = ui - ext_vals[c]
            r = np.sqrt(d * d + e2)
            f += w * r
            gi += w * d / r
        d = ui - far_value
        r = np.sqrt(d * d + e2)
        f += far_w[i] * r
        gi += far_w[i] * d / r
        g[i] += gi
    return f, g


@nb.njit(cache=True)
def class_rows(cells, klass, n_class, offsets, weights):
    """``out[r, c]``: coupling of cell ``cells[r]`` to padded cells of class ``c`` (class < 0 skipped)."""
    out = np.zeros((cells.shape[0], n_class))
    for r in range(cells.shape[0]):
        i = cells[r]
        for k in range(offsets.shape[0]):
            c = klass[i + offsets[k]]
            if c >= 0:
                out[r, c] += weights[k]
    return out


@nb.njit(cache=True)
def local_delta(i, new, values, in_omega, offsets, weights):
    """Change of the pair energy when ``values[i]`` (an omega cell) is replaced by ``new``."""
    old = values[i]
    acc = 0.0
    for k in range(offsets.shape[0]):
        j = i + offsets[k]
        v = values[j]
        acc += weights[k] * (abs(new - v) - abs(old - v))
    return acc
