"""Compiled inner loops for the particle tracker.

No fastmath: summation order must match a plain double loop exactly.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def bt_scores_one_way(xi, yi, fi, xj, yj, fj, wj, l, two_var, floor_pen):
    out = np.empty(xi.shape[0])
    for a in range(xi.shape[0]):
        acc = 0.0
        for b in range(xj.shape[0]):
            d = math.sqrt((xi[a] - xj[b]) ** 2 + (yi[a] - yj[b]) ** 2) + floor_pen * abs(fi[a] - fj[b])
            e = d - l
            acc += wj[b] * math.exp(-(e * e) / two_var)
        out[a] = acc
    return out


@njit(cache=True)
def bt_scores_both_ways(xi, yi, fi, wi, xj, yj, fj, wj, l, two_var, floor_pen):
    """Scores for both sets of a sighting from one pass over the kernel matrix."""
    si = np.empty(xi.shape[0])
    sj = np.zeros(xj.shape[0])
    for a in range(xi.shape[0]):
        acc = 0.0
        xa, ya, fa, wa = xi[a], yi[a], fi[a], wi[a]
        for b in range(xj.shape[0]):
            dx = xa - xj[b]
            dy = ya - yj[b]
            d = math.sqrt(dx * dx + dy * dy)
            if floor_pen != 0.0:
                d += floor_pen * abs(fa - fj[b])
            e = d - l
            k = math.exp(-(e * e) / two_var)
            acc += wj[b] * k
            sj[b] += wa * k
        si[a] = acc
    return si, sj


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _within(ax, ay, bx, by, cx, cy):
    return min(ax, bx) <= cx <= max(ax, bx) and min(ay, by) <= cy <= max(ay, by)


@njit(cache=True)
def crosses_any(start, end, walls):
    """Per move, whether the segment start-end touches any wall (x1, y1, x2, y2)."""
    n = start.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for a in range(n):
        px1, py1, px2, py2 = start[a, 0], start[a, 1], end[a, 0], end[a, 1]
        for w in range(walls.shape[0]):
            qx1, qy1, qx2, qy2 = walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]
            d1 = _orient(qx1, qy1, qx2, qy2, px1, py1)
            d2 = _orient(qx1, qy1, qx2, qy2, px2, py2)
            d3 = _orient(px1, py1, px2, py2, qx1, qy1)
            d4 = _orient(px1, py1, px2, py2, qx2, qy2)
            if (((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and
                    ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0))):
                out[a] = True
            elif ((d1 == 0 and _within(qx1, qy1, qx2, qy2, px1, py1)) or
                  (d2 == 0 and _within(qx1, qy1, qx2, qy2, px2, py2)) or
                  (d3 == 0 and _within(px1, py1, px2, py2, qx1, qy1)) or
                  (d4 == 0 and _within(px1, py1, px2, py2, qx2, qy2))):
                out[a] = True
            if out[a]:
                break
    return out
