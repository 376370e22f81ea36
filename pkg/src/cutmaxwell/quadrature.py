"""Quadrature on cells, curved cut sub-cells, interface arcs, and faces.

Cut regions are integrated with a fan decomposition: straight triangles
from the side's apex vertex to the straight boundary of the region, plus
one curved-edge triangle per interface arc, mapped by the blending
P(s,t) = A + t*(gamma(s) - A).  Orders are points-per-direction; the
defaults (p+2 straight, p+3 curved) follow the validated choices, and
callers may raise them (assembly uses 2p+2 on cut pieces so that Q_p
products are integrated exactly when the interface piece is straight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import (
    DegenerateRegionError,
    InconsistentTopologyError,
    QuadratureWeightError,
)
from .levelset import (
    CircleLevelSet,
    ElementClass,
    circle_arc_angles,
    side_of,
    square_vertices,
    _generic_arc_offset,
)

_MAX_GAUSS = 64


@dataclass
class QuadratureRule:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)

    def integrate(self, f):
        return self.weights @ np.asarray(f(self.points))

    @property
    def measure(self):
        return float(np.sum(self.weights))


@dataclass
class ArcRule(QuadratureRule):
    normals: np.ndarray = field(default=None)  # (n, 2), outer to side 1


def gauss_1d(m: int):
    """Gauss-Legendre nodes/weights on [-1, 1], exact for degree 2m-1."""
    if not 1 <= m <= _MAX_GAUSS:
        raise ValueError(f"point count must be in [1, {_MAX_GAUSS}], got {m}")
    return npleg.leggauss(m)


def gauss_01(m: int):
    x, w = gauss_1d(m)
    return 0.5 * (x + 1.0), 0.5 * w


def cell_rule(bounds, p: int | None = None, m: int | None = None) -> QuadratureRule:
    """Tensor Gauss rule on an axis-aligned box (m = p+2 by default)."""
    if m is None:
        m = p + 2
    x0, y0, x1, y1 = bounds
    gx, gw = gauss_1d(m)
    xs = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * gx
    ys = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * gx
    wx = 0.5 * (x1 - x0) * gw
    wy = 0.5 * (y1 - y0) * gw
    pts = np.column_stack([np.repeat(xs, m), np.tile(ys, m)])
    w = np.repeat(wx, m) * np.tile(wy, m)
    return QuadratureRule(pts, w)


def face_rule(p0, p1, p: int | None = None, m: int | None = None) -> QuadratureRule:
    """Gauss rule on the straight segment p0 -> p1 (m = p+2 by default)."""
    if m is None:
        m = p + 2
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    gx, gw = gauss_01(m)
    pts = p0 + gx[:, None] * (p1 - p0)
    return QuadratureRule(pts, gw * float(np.linalg.norm(p1 - p0)))


def _blended_triangle(apex, gamma, dgamma, m, check_positive):
    """Tensor rule under P(s,t) = A + t*(gamma(s)-A) with signed Jacobian."""
    s, ws = gauss_01(m)
    t, wt = gauss_01(m)
    g = gamma(s)  # (m, 2)
    dg = dgamma(s)  # (m, 2)
    rel = g - apex
    # positive for CCW boundary traversal with the region on the left
    cross = rel[:, 0] * dg[:, 1] - rel[:, 1] * dg[:, 0]  # (m,)
    pts = apex + t[:, None, None] * rel[None, :, :]  # (mt, ms, 2)
    w = (wt * t)[:, None] * (ws * cross)[None, :]
    w = w.ravel()
    if check_positive and np.any(w <= 0.0):
        return None
    return pts.reshape(-1, 2), w


def _straight_gamma(q1, q2):
    d = q2 - q1

    def gamma(s):
        return q1 + s[:, None] * d

    def dgamma(s):
        return np.broadcast_to(d, (len(s), 2)).copy()

    return gamma, dgamma


def _circle_gamma(ls, t0, t1):
    c, r = ls.center, ls.radius

    def gamma(s):
        th = t0 + s * (t1 - t0)
        return c + r * np.column_stack([np.cos(th), np.sin(th)])

    def dgamma(s):
        th = t0 + s * (t1 - t0)
        return r * (t1 - t0) * np.column_stack([-np.sin(th), np.cos(th)])

    return gamma, dgamma


def _generic_gamma(ls, x1, x2, span):
    chord = x2 - x1
    m_hat = np.array([-chord[1], chord[0]])
    m_hat /= np.linalg.norm(m_hat)

    def gamma(s):
        pts = np.empty((len(s), 2))
        for i, si in enumerate(s):
            q = x1 + si * chord
            off = _generic_arc_offset(ls, q, m_hat, span)
            pts[i] = q + off * m_hat
        return pts

    def dgamma(s):
        pts = gamma(s)
        grad = ls.gradient(pts)
        dn = grad @ m_hat
        if np.any(np.abs(dn) < 1e-30):
            raise InconsistentTopologyError("interface tangent to the chord normal")
        dprime = -(grad @ chord) / dn
        return chord + dprime[:, None] * m_hat

    return gamma, dgamma


def _region_paths(verts, topo):
    """Corner index lists of the two CCW boundary paths between the crossings."""
    m = len(verts)
    e1, e2 = topo.crossing_edges
    xa, xb = topo.crossings
    corners_ab = [(e1 + 1 + k) % m for k in range(((e2 - e1 - 1) % m) + 1)]
    corners_ba = [(e2 + 1 + k) % m for k in range(((e1 - e2 - 1) % m) + 1)]
    return corners_ab, corners_ba, xa, xb


def cut_square_rule(ls, bounds, topo, side: int, m: int) -> QuadratureRule:
    """Rule over (square cell) ∩ (side i region) via the fan decomposition."""
    if topo.element_class is not ElementClass.CUT_PROPER:
        raise InconsistentTopologyError("cut rule requires a properly cut cell")
    verts = square_vertices(bounds)
    corners_ab, corners_ba, xa, xb = _region_paths(verts, topo)
    sgn = -1 if side == 1 else 1
    vsign = side_of(ls, verts)
    if all(vsign[c] == sgn for c in corners_ab):
        corners, start, end = corners_ab, xa, xb
    elif all(vsign[c] == sgn for c in corners_ba):
        corners, start, end = corners_ba, xb, xa
    else:
        raise InconsistentTopologyError("boundary path has mixed vertex signs")

    apex = np.asarray(topo.apexes[side], dtype=float)
    path = [np.asarray(start)] + [verts[c] for c in corners] + [np.asarray(end)]
    h = max(bounds[2] - bounds[0], bounds[3] - bounds[1])
    tol = 1e-12 * h

    pts_all, w_all = [], []
    for q1, q2 in zip(path[:-1], path[1:]):
        if np.linalg.norm(q1 - apex) < tol or np.linalg.norm(q2 - apex) < tol:
            continue
        gamma, dgamma = _straight_gamma(q1, q2)
        out = _blended_triangle(apex, gamma, dgamma, m, check_positive=False)
        pts, w = out
        if np.any(w < -tol * h):
            raise QuadratureWeightError("straight fan piece produced negative weights")
        pts_all.append(pts)
        w_all.append(w)

    # curved piece: arc from the path's end back to its start (CCW closure)
    if isinstance(ls, CircleLevelSet):
        t0, t1 = circle_arc_angles(ls, np.asarray(end), np.asarray(start), verts)
        segments = [(t0, t1)]
        make = lambda a, b: _circle_gamma(ls, a, b)
    else:
        span = math.hypot(bounds[2] - bounds[0], bounds[3] - bounds[1])
        segments = [(np.asarray(end), np.asarray(start))]
        make = lambda a, b: _generic_gamma(ls, a, b, span)

    for _ in range(4):
        results = [
            _blended_triangle(apex, *make(a, b), m, check_positive=True)
            for a, b in segments
        ]
        if all(r is not None for r in results):
            break
        # bisect every failing segment in parameter
        new_segments = []
        for (a, b), r in zip(segments, results):
            if r is not None:
                new_segments.append((a, b))
            elif isinstance(ls, CircleLevelSet):
                mid = 0.5 * (a + b)
                new_segments.extend([(a, mid), (mid, b)])
            else:
                gamma, _ = make(a, b)
                mid = gamma(np.array([0.5]))[0]
                new_segments.extend([(a, mid), (mid, b)])
        segments = new_segments
    else:
        raise QuadratureWeightError(
            "curved piece kept nonpositive weights after 3 bisections"
        )
    for r in results:
        if r is None:
            raise QuadratureWeightError(
                "curved piece kept nonpositive weights after 3 bisections"
            )
        pts_all.append(r[0])
        w_all.append(r[1])

    pts = np.vstack(pts_all)
    w = np.concatenate(w_all)
    cell_area = (bounds[2] - bounds[0]) * (bounds[3] - bounds[1])
    if float(np.sum(w)) < 1e-14 * cell_area:
        raise DegenerateRegionError(
            f"side-{side} region of cell {bounds} is vanishingly small"
        )
    return QuadratureRule(pts, w)


def arc_rule_square(ls, bounds, topo, m: int) -> ArcRule:
    """Arc-length rule with outward (to side 1) normals on one cell's arc."""
    if topo.element_class is not ElementClass.CUT_PROPER:
        raise InconsistentTopologyError("arc rule requires a properly cut cell")
    verts = square_vertices(bounds)
    xa, xb = topo.crossings
    s, ws = gauss_01(m)
    if isinstance(ls, CircleLevelSet):
        t0, t1 = circle_arc_angles(ls, xa, xb, verts)
        th = t0 + s * (t1 - t0)
        pts = ls.center + ls.radius * np.column_stack([np.cos(th), np.sin(th)])
        w = ws * ls.radius * abs(t1 - t0)
        normals = (pts - ls.center) / ls.radius
        return ArcRule(pts, w, normals)
    span = math.hypot(bounds[2] - bounds[0], bounds[3] - bounds[1])
    gamma, dgamma = _generic_gamma(ls, np.asarray(xa), np.asarray(xb), span)
    pts = gamma(s)
    dg = dgamma(s)
    w = ws * np.linalg.norm(dg, axis=1)
    grad = ls.gradient(pts)
    normals = grad / np.linalg.norm(grad, axis=1)[:, None]
    return ArcRule(pts, w, normals)


def cut_cell_rule(macro, side: int, ls, p: int | None = None, m: int | None = None) -> QuadratureRule:
    """Rule over (macro-element) ∩ (side i), one fan per cut member cell.

    macro must provide member_pieces() -> iterable of (bounds, PolygonCut|None);
    None marks an uncut member whose side is decided by its center.
    """
    if m is None:
        m = p + 3
    pts_all, w_all = [], []
    for bounds, topo in macro.member_pieces():
        if topo is None:
            center = np.array([[0.5 * (bounds[0] + bounds[2]), 0.5 * (bounds[1] + bounds[3])]])
            member_side = 1 if side_of(ls, center)[0] < 0 else 2
            if member_side != side:
                continue
            rule = cell_rule(bounds, m=m)
        else:
            rule = cut_square_rule(ls, bounds, topo, side, m)
        pts_all.append(rule.points)
        w_all.append(rule.weights)
    if not pts_all:
        raise DegenerateRegionError(f"macro-element has no side-{side} region")
    return QuadratureRule(np.vstack(pts_all), np.concatenate(w_all))


def interface_rule(macro, ls, p: int | None = None, m: int | None = None) -> ArcRule:
    """Arc rule over the macro-element's interface piece (per-member arcs)."""
    if m is None:
        m = p + 3
    pts, w, nrm = [], [], []
    for bounds, topo in macro.member_pieces():
        if topo is None or topo.element_class is not ElementClass.CUT_PROPER:
            continue
        r = arc_rule_square(ls, bounds, topo, m)
        pts.append(r.points)
        w.append(r.weights)
        nrm.append(r.normals)
    if not pts:
        raise InconsistentTopologyError("macro-element carries no interface arc")
    return ArcRule(np.vstack(pts), np.concatenate(w), np.vstack(nrm))
