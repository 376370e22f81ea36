"""Implicit interface geometry: classification, crossings, chords, deviation.

The interface is the zero set of a signed function phi, negative in the
inner subdomain (side 1) and positive in the outer one (side 2).  Points
with phi == 0 are assigned to side 1 (deterministic tie-break).

All polygon routines take CCW vertex lists; a square cell is the polygon
[(x0,y0),(x1,y0),(x1,y1),(x0,y1)] so edges are indexed bottom, right,
top, left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateGeometryError, InconsistentTopologyError

_TIE = 0.0  # phi <= _TIE belongs to side 1

# number of arc samples for the deviation (doubled for the Richardson check)
_DEVIATION_SAMPLES = 256
_GENERIC_EDGE_SAMPLES = 32
_GENERIC_BISECT_TOL = 1e-13


class LevelSet:
    """Signed implicit description of the interface."""

    kind = "generic"

    def value(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_at(self, x: float, y: float) -> float:
        return float(self.value(np.array([[x, y]]))[0])


class CircleLevelSet(LevelSet):
    """phi(x) = |x - center|^2 - radius^2 (negative inside the disc)."""

    kind = "circle"

    def __init__(self, center=(0.0, 0.0), radius=math.sqrt(3.0)):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def value(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        return d[:, 0] ** 2 + d[:, 1] ** 2 - self.radius**2

    def gradient(self, pts):
        return 2.0 * (np.asarray(pts, dtype=float) - self.center)


class GenericLevelSet(LevelSet):
    """Wraps arbitrary callables phi(pts)->(n,), grad(pts)->(n,2)."""

    kind = "generic"

    def __init__(self, func, grad):
        self._func = func
        self._grad = grad

    def value(self, pts):
        return np.asarray(self._func(np.asarray(pts, dtype=float)), dtype=float)

    def gradient(self, pts):
        return np.asarray(self._grad(np.asarray(pts, dtype=float)), dtype=float)


def line_level_set(normal=(1.0, 0.0), offset=0.0) -> GenericLevelSet:
    """Straight interface n.x - offset = 0; side 1 where n.x < offset."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def func(pts):
        return pts @ n - offset

    def grad(pts):
        return np.broadcast_to(n, (len(pts), 2)).copy()

    return GenericLevelSet(func, grad)


def side_of(ls: LevelSet, pts) -> np.ndarray:
    """Returns +1/-1 per point; zeros count as side 1 (-1)."""
    v = ls.value(np.asarray(pts, dtype=float))
    return np.where(v <= _TIE, -1, 1)


class ElementClass(Enum):
    INTERIOR_1 = "interior1"
    INTERIOR_2 = "interior2"
    CUT_PROPER = "cut_proper"
    CUT_IMPROPER = "cut_improper"


def segment_crossings(ls: LevelSet, a, b) -> np.ndarray:
    """Parameters t in (0,1) where phi changes sign along a + t(b-a)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if isinstance(ls, CircleLevelSet):
        d = b - a
        e = a - ls.center
        qa = d @ d
        qb = 2.0 * (e @ d)
        qc = e @ e - ls.radius**2
        disc = qb * qb - 4.0 * qa * qc
        if disc <= 0.0 or qa == 0.0:
            return np.empty(0)
        sq = math.sqrt(disc)
        roots = np.array([(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)])
        return np.sort(roots[(roots > 1e-12) & (roots < 1.0 - 1e-12)])

    m = _GENERIC_EDGE_SAMPLES
    t = np.linspace(0.0, 1.0, m + 1)
    pts = a + t[:, None] * (b - a)
    vals = ls.value(pts)
    scale = max(np.max(np.abs(vals)), 1e-300)
    if np.all(np.abs(vals) < 1e-14 * max(scale, 1.0)):
        raise DegenerateGeometryError(
            f"level set vanishes along the edge {a} -> {b}"
        )
    signs = np.where(vals <= _TIE, -1, 1)
    seglen = float(np.linalg.norm(b - a))
    roots = []
    for i in range(m):
        if signs[i] == signs[i + 1]:
            continue
        lo, hi = t[i], t[i + 1]
        flo = vals[i]
        while (hi - lo) * seglen > _GENERIC_BISECT_TOL:
            mid = 0.5 * (lo + hi)
            fmid = ls.value_at(*(a + mid * (b - a)))
            if (flo <= _TIE) == (fmid <= _TIE):
                lo, flo = mid, fmid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    roots = np.asarray(roots)
    return roots[(roots > 1e-12) & (roots < 1.0 - 1e-12)]


def segment_side_lengths(ls: LevelSet, a, b):
    """Lengths of the side-1 and side-2 portions of the segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    ts = np.concatenate([[0.0], segment_crossings(ls, a, b), [1.0]])
    len1 = 0.0
    for lo, hi in zip(ts[:-1], ts[1:]):
        mid = a + 0.5 * (lo + hi) * (b - a)
        if ls.value_at(*mid) <= _TIE:
            len1 += (hi - lo) * length
    return len1, length - len1


def _point_in_polygon(pt, verts, tol=0.0) -> bool:
    """Ray casting with an on-boundary tolerance (counts as inside)."""
    x, y = pt
    n = len(verts)
    inside = False
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        # on-segment check
        dx, dy = x2 - x1, y2 - y1
        ll = math.hypot(dx, dy)
        if ll > 0:
            s = ((x - x1) * dx + (y - y1) * dy) / (ll * ll)
            if -tol <= s <= 1 + tol:
                d = abs((x - x1) * dy - (y - y1) * dx) / ll
                if d <= tol:
                    return True
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if x < xc:
                inside = not inside
    return inside


def _interface_touches(ls: LevelSet, verts) -> bool:
    """Whether the zero set meets the closed polygon (no edge crossings case)."""
    verts = np.asarray(verts, dtype=float)
    if isinstance(ls, CircleLevelSet):
        dmax = np.max(np.linalg.norm(verts - ls.center, axis=1))
        if _point_in_polygon(ls.center, verts):
            dmin = 0.0
        else:
            dmin = math.inf
            n = len(verts)
            for i in range(n):
                a, b = verts[i], verts[(i + 1) % n]
                d = b - a
                s = np.clip((ls.center - a) @ d / (d @ d), 0.0, 1.0)
                dmin = min(dmin, float(np.linalg.norm(a + s * d - ls.center)))
        return dmin < ls.radius < dmax
    # generic: probe a coarse interior grid of the bounding box
    x0, y0 = verts.min(axis=0)
    x1, y1 = verts.max(axis=0)
    xs, ys = np.meshgrid(np.linspace(x0, x1, 9), np.linspace(y0, y1, 9))
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    keep = [p for p in pts if _point_in_polygon(p, verts)]
    if not keep:
        return False
    s = side_of(ls, np.asarray(keep))
    return bool(np.any(s < 0) and np.any(s > 0))


@dataclass
class PolygonCut:
    """Cut topology of a (rectilinear) polygon against the interface."""

    element_class: ElementClass
    vertices: np.ndarray  # (m, 2), CCW
    crossings: np.ndarray | None = None  # (2, 2) boundary-order
    crossing_edges: tuple | None = None
    crossing_params: tuple | None = None  # boundary parameter s in [0, m)
    chord: np.ndarray | None = None  # == crossings for proper cuts
    dist_h: float | None = None  # Hausdorff distance arc -> chord line
    eta: float | None = None
    apexes: dict | None = None  # side -> vertex used in the denominator
    edge_fractions: np.ndarray | None = None  # (m, 2) per-edge fractions
    large: tuple | None = None  # (side1, side2) verdicts

    @property
    def is_cut(self) -> bool:
        return self.element_class in (
            ElementClass.CUT_PROPER,
            ElementClass.CUT_IMPROPER,
        )


def _chord_distance(pts, x1, x2):
    """Distance of points to the infinite line through x1, x2."""
    u = x2 - x1
    nu = np.linalg.norm(u)
    if nu == 0:
        raise InconsistentTopologyError("coincident crossings, chord undefined")
    u = u / nu
    d = np.atleast_2d(pts) - x1
    return np.abs(d[:, 0] * u[1] - d[:, 1] * u[0])


def circle_arc_angles(ls: CircleLevelSet, x1, x2, verts):
    """Angle interval (t0, t1) of the arc from x1 to x2 inside the polygon."""
    c = ls.center
    t0 = math.atan2(x1[1] - c[1], x1[0] - c[0])
    t1 = math.atan2(x2[1] - c[1], x2[0] - c[0])
    verts = np.asarray(verts, dtype=float)
    scale = max(np.ptp(verts[:, 0]), np.ptp(verts[:, 1]))
    tol = 1e-9 * scale
    for dt in (math.remainder(t1 - t0, 2 * math.pi),):
        for cand in (dt, dt - 2 * math.pi if dt > 0 else dt + 2 * math.pi):
            th = t0 + np.linspace(0.0, 1.0, 9)[1:-1] * cand
            pts = c + ls.radius * np.column_stack([np.cos(th), np.sin(th)])
            if all(_point_in_polygon(p, verts, tol=tol) for p in pts):
                return t0, t0 + cand
    raise InconsistentTopologyError("no circle arc joins the crossings inside the cell")


def _generic_arc_offset(ls: LevelSet, q, m_hat, span):
    """Signed offset along m_hat from q to the nearest interface point."""
    nd = 129
    d = np.linspace(-span, span, nd)
    pts = q + d[:, None] * m_hat
    vals = ls.value(pts)
    signs = np.where(vals <= _TIE, -1, 1)
    candidates = []
    for i in range(nd - 1):
        if signs[i] != signs[i + 1]:
            lo, hi, flo = d[i], d[i + 1], vals[i]
            while hi - lo > 1e-14 * max(span, 1.0):
                mid = 0.5 * (lo + hi)
                fmid = ls.value_at(*(q + mid * m_hat))
                if (flo <= _TIE) == (fmid <= _TIE):
                    lo, flo = mid, fmid
                else:
                    hi = mid
            candidates.append(0.5 * (lo + hi))
    if not candidates:
        raise InconsistentTopologyError(
            "interface is not a graph over the chord inside the cell"
        )
    return min(candidates, key=abs)


def arc_points(ls: LevelSet, x1, x2, verts, n: int) -> np.ndarray:
    """n points on the interface piece joining the crossings x1 -> x2."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if isinstance(ls, CircleLevelSet):
        t0, t1 = circle_arc_angles(ls, x1, x2, verts)
        th = np.linspace(t0, t1, n)
        return ls.center + ls.radius * np.column_stack([np.cos(th), np.sin(th)])
    chord = x2 - x1
    m_hat = np.array([-chord[1], chord[0]])
    m_hat /= np.linalg.norm(m_hat)
    verts = np.asarray(verts, dtype=float)
    span = math.hypot(np.ptp(verts[:, 0]), np.ptp(verts[:, 1]))
    s = np.linspace(0.0, 1.0, n)
    pts = np.empty((n, 2))
    for i, si in enumerate(s):
        q = x1 + si * chord
        off = 0.0 if si in (0.0, 1.0) else _generic_arc_offset(ls, q, m_hat, span)
        pts[i] = q + off * m_hat
    return pts


def _sampled_max(vals: np.ndarray) -> float:
    """Max of a smooth sampled function with parabolic peak refinement."""
    i = int(np.argmax(vals))
    if i == 0 or i == len(vals) - 1:
        return float(vals[i])
    f0, fm, fp = vals[i], vals[i - 1], vals[i + 1]
    curv = 2.0 * f0 - fm - fp
    if curv <= 1e-300:
        return float(f0)
    return float(f0 + (fp - fm) ** 2 / (8.0 * curv))


def chord_and_deviation(ls: LevelSet, verts, x1, x2, apexes):
    """Chord, Hausdorff distance, and deviation for a proper cut polygon.

    apexes maps side -> vertex; the deviation denominator is the distance
    of each apex to the chord line, and eta is the max over sides.
    """
    verts = np.asarray(verts, dtype=float)
    h_k = max(np.ptp(verts[:, 0]), np.ptp(verts[:, 1]))
    pts = arc_points(ls, x1, x2, verts, _DEVIATION_SAMPLES)
    d1 = _sampled_max(_chord_distance(pts, x1, x2))
    pts2 = arc_points(ls, x1, x2, verts, 2 * _DEVIATION_SAMPLES)
    d2 = _sampled_max(_chord_distance(pts2, x1, x2))
    if abs(d2 - d1) > 1e-10 * h_k + 1e-13:
        raise InconsistentTopologyError(
            f"arc sampling did not converge: {d1:.3e} vs {d2:.3e} on h={h_k:.3e}"
        )
    dist_h = d2
    eta = 0.0
    for side, apex in apexes.items():
        denom = float(_chord_distance(np.asarray([apex]), x1, x2)[0])
        if denom <= 0:
            raise InconsistentTopologyError(f"apex for side {side} lies on the chord")
        eta = max(eta, dist_h / denom)
    return np.vstack([x1, x2]), dist_h, eta


def polygon_cut(ls: LevelSet, verts, delta0: float, with_deviation: bool = True) -> PolygonCut:
    """Full cut data for a CCW polygon (classification always filled)."""
    verts = np.asarray(verts, dtype=float)
    m = len(verts)
    vsign = side_of(ls, verts)
    edge_ts = [segment_crossings(ls, verts[i], verts[(i + 1) % m]) for i in range(m)]
    counts = [len(t) for t in edge_ts]
    total = sum(counts)

    if total == 0:
        if _interface_touches(ls, verts) or len(set(vsign)) > 1:
            return PolygonCut(ElementClass.CUT_IMPROPER, verts)
        cls = ElementClass.INTERIOR_1 if vsign[0] < 0 else ElementClass.INTERIOR_2
        return PolygonCut(cls, verts)

    if total != 2 or max(counts) > 1:
        return PolygonCut(ElementClass.CUT_IMPROPER, verts)

    edges = tuple(i for i, c in enumerate(counts) if c == 1)
    params = tuple(edge_ts[i][0] for i in edges)
    cross = np.array(
        [
            verts[e] + params[j] * (verts[(e + 1) % m] - verts[e])
            for j, e in enumerate(edges)
        ]
    )

    # per-edge side fractions
    fractions = np.zeros((m, 2))
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        l1, l2 = segment_side_lengths(ls, a, b)
        ltot = l1 + l2
        fractions[i] = (l1 / ltot, l2 / ltot)
    tol = 1e-12
    large = tuple(
        bool(np.all(fractions[:, s][fractions[:, s] > tol] >= delta0 - 1e-12))
        for s in (0, 1)
    )

    # apex per side: vertex maximizing the distance to the chord line
    apexes = {}
    for s, sgn in ((1, -1), (2, 1)):
        mask = vsign == sgn
        side_present = np.any(fractions[:, s - 1] > tol)
        if not np.any(mask):
            if side_present:
                raise InconsistentTopologyError(
                    f"side {s} is nonempty but owns no polygon vertex"
                )
            continue
        cand = verts[mask]
        dists = _chord_distance(cand, cross[0], cross[1])
        apexes[s] = cand[int(np.argmax(dists))]

    cut = PolygonCut(
        ElementClass.CUT_PROPER,
        verts,
        crossings=cross,
        crossing_edges=edges,
        crossing_params=params,
        edge_fractions=fractions,
        large=large,
        apexes=apexes,
    )
    if with_deviation:
        chord, dist_h, eta = chord_and_deviation(ls, verts, cross[0], cross[1], apexes)
        cut.chord = chord
        cut.dist_h = dist_h
        cut.eta = eta
    return cut


def square_vertices(bounds) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def classify_cell(ls: LevelSet, bounds) -> ElementClass:
    """Classification of an axis-aligned square cell (edges: B, R, T, L)."""
    x0, y0, x1, y1 = bounds
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"cell {bounds} has nonpositive side length")
    return polygon_cut(ls, square_vertices(bounds), 0.5, with_deviation=False).element_class


def cell_cut(ls: LevelSet, bounds, delta0: float, with_deviation: bool = True) -> PolygonCut:
    return polygon_cut(ls, square_vertices(bounds), delta0, with_deviation=with_deviation)


def growth_factor(t: float) -> float:
    """t + sqrt(t^2 - 1), the sharp polynomial-growth factor, for t >= 1."""
    if t < 1.0:
        if t > 1.0 - 1e-12:
            t = 1.0
        else:
            raise ValueError(f"growth factor undefined for t={t} < 1")
    return t + math.sqrt(t * t - 1.0)


def penalty_amplification(eta: float, p: int, cut: bool = True) -> float:
    """Theta for the interface penalty: growth_factor((1+3*eta)/(1-eta))**(6p).

    Uncut elements get 1.  Computed in log space; may overflow to inf for
    eta near 1 (callers emit a conditioning warning).
    """
    if not cut:
        return 1.0
    if eta < 0.0 or eta >= 1.0:
        raise ValueError(f"deviation must lie in [0, 1), got {eta}")
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    log_t = math.log(growth_factor((1.0 + 3.0 * eta) / (1.0 - eta)))
    try:
        return math.exp(6.0 * p * log_t)
    except OverflowError:
        return math.inf
