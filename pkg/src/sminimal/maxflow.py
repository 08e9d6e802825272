"""Dense max-flow / min-cut for small, fully coupled cut problems.

The kernel graph is dense (every cell pair within the truncation radius is an
edge), so the residual network is stored as an ``n x n`` matrix and the
source/sink are implicit terminals with capacity vectors. Dinic's algorithm
with lowest-index scanning keeps the result deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np


@dataclass(frozen=True)
class CutResult:
    flow: float
    min_side: np.ndarray  # source side of the smallest minimum cut
    max_side: np.ndarray  # source side of the largest minimum cut


@nb.njit(cache=True)
def _bfs_levels(r, rs, rt, tol, level):
    n = r.shape[0]
    level[:] = -1
    queue = np.empty(n, np.int64)
    head = 0
    tail = 0
    for v in range(n):
        if rs[v] > tol:
            level[v] = 1
            queue[tail] = v
            tail += 1
    sink_level = -1
    while head < tail:
        u = queue[head]
        head += 1
        if rt[u] > tol and sink_level < 0:
            sink_level = level[u] + 1
        if sink_level > 0 and level[u] >= sink_level - 1:
            continue
        row = r[u]
        for v in range(n):
            if level[v] < 0 and row[v] > tol:
                level[v] = level[u] + 1
                queue[tail] = v
                tail += 1
    return sink_level


@nb.njit(cache=True)
def _blocking_flow(r, rs, rt, tol, level, sink_level):
    n = r.shape[0]
    ptr = np.zeros(n, np.int64)
    path = np.empty(n, np.int64)
    total = 0.0
    for s0 in range(n):
        while level[s0] == 1 and rs[s0] > tol:
            depth = 1
            path[0] = s0
            found = False
            while depth > 0:
                u = path[depth - 1]
                if level[u] == sink_level - 1:
                    if rt[u] > tol:
                        found = True
                        break
                    level[u] = -1
                    depth -= 1
                    continue
                row = r[u]
                nxt = level[u] + 1
                p = ptr[u]
                while p < n and not (level[p] == nxt and row[p] > tol):
                    p += 1
                ptr[u] = p
                if p < n:
                    path[depth] = p
                    depth += 1
                else:
                    level[u] = -1
                    depth -= 1
            if not found:
                break
            f = min(rs[s0], rt[path[depth - 1]])
            for k in range(depth - 1):
                c = r[path[k], path[k + 1]]
                if c < f:
                    f = c
            rs[s0] -= f
            for k in range(depth - 1):
                a = path[k]
                b = path[k + 1]
                r[a, b] -= f
                r[b, a] += f
            rt[path[depth - 1]] -= f
            total += f
    return total


@nb.njit(cache=True)
def _dinic(r, rs, rt, tol):
    n = r.shape[0]
    total = 0.0
    # trivial source -> v -> sink paths first
    for v in range(n):
        f = min(rs[v], rt[v])
        if f > 0.0:
            rs[v] -= f
            rt[v] -= f
            total += f
    level = np.empty(n, np.int64)
    while True:
        sink_level = _bfs_levels(r, rs, rt, tol, level)
        if sink_level < 0:
            break
        total += _blocking_flow(r, rs, rt, tol, level, sink_level)
    return total


@nb.njit(cache=True)
def _source_reach(r, rs, tol):
    n = r.shape[0]
    seen = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    top = 0
    for v in range(n):
        if rs[v] > tol:
            seen[v] = True
            stack[top] = v
            top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        row = r[u]
        for v in range(n):
            if not seen[v] and row[v] > tol:
                seen[v] = True
                stack[top] = v
                top += 1
    return seen


@nb.njit(cache=True)
def _sink_reach(r, rt, tol):
    n = r.shape[0]
    seen = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    top = 0
    for v in range(n):
        if rt[v] > tol:
            seen[v] = True
            stack[top] = v
            top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        for v in range(n):
            # v reaches u through the residual arc v -> u
            if not seen[v] and r[v, u] > tol:
                seen[v] = True
                stack[top] = v
                top += 1
    return seen


def min_cut(cap: np.ndarray, src: np.ndarray, snk: np.ndarray, rtol: float = 1e-13) -> CutResult:
    """Minimum s-t cut of a dense symmetric graph with terminal capacities.

    ``cap`` is consumed (overwritten with the residual network). Residuals at or
    below ``rtol`` times the largest capacity count as saturated.
    """
    n = len(src)
    if n == 0:
        empty = np.zeros(0, bool)
        return CutResult(0.0, empty, empty)
    scale = max(float(np.max(cap)) if cap.size else 0.0, float(np.max(src)), float(np.max(snk)), 1e-300)
    tol = rtol * scale
    rs = np.array(src, dtype=float)
    rt = np.array(snk, dtype=float)
    flow = _dinic(cap, rs, rt, tol)
    lo = _source_reach(cap, rs, tol)
    hi = ~_sink_reach(cap, rt, tol)
    return CutResult(float(flow), lo, hi)
