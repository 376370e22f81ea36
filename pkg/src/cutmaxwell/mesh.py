"""Quadtree Cartesian mesh with hanging nodes, cell merging, and faces.

A mesh is a forest of n x n root squares over a square domain; a leaf is
addressed by (level, ix, iy) with 0 <= ix, iy < n * 2**level.  All
topology (adjacency, faces, corners) is done in integer index space so
that it is exact; physical coordinates are derived.

The induced mesh merges small cut leaves into macro-elements until every
interface macro-element is large w.r.t. both subdomains (edge fractions
>= delta0 on the union's boundary edges), then enumerates interior,
boundary, and interface faces with fixed normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ImproperCutError, InconsistentTopologyError, MergeFailureError
from .levelset import (
    ElementClass,
    LevelSet,
    PolygonCut,
    penalty_amplification,
    polygon_cut,
    segment_side_lengths,
    side_of,
)

Key = tuple  # (level, ix, iy)

_DIRS = {"+x": (1, 0), "-x": (-1, 0), "+y": (0, 1), "-y": (0, -1)}


class QuadMesh:
    """1-irregular quadtree forest over a square domain."""

    def __init__(self, n: int, origin=(-2.0, -2.0), size: float = 4.0):
        if n < 2:
            raise ValueError("need at least 2 cells per side")
        if size <= 0:
            raise ValueError("domain size must be positive")
        self.n = int(n)
        self.origin = (float(origin[0]), float(origin[1]))
        self.size = float(size)
        self.h0 = self.size / self.n
        self._leaves: set[Key] = {(0, i, j) for i in range(n) for j in range(n)}

    # -- geometry ------------------------------------------------------

    def cells_per_side(self, level: int) -> int:
        return self.n * (1 << level)

    def h(self, key: Key) -> float:
        return self.h0 / (1 << key[0])

    def bounds(self, key: Key):
        level, ix, iy = key
        h = self.h0 / (1 << level)
        x0 = self.origin[0] + ix * h
        y0 = self.origin[1] + iy * h
        return (x0, y0, x0 + h, y0 + h)

    # -- leaf bookkeeping ----------------------------------------------

    def leaves(self):
        return sorted(self._leaves)

    def is_leaf(self, key: Key) -> bool:
        return key in self._leaves

    def refine(self, key: Key):
        """Replace a leaf by its four children."""
        self._leaves.remove(key)
        level, ix, iy = key
        for dx in (0, 1):
            for dy in (0, 1):
                self._leaves.add((level + 1, 2 * ix + dx, 2 * iy + dy))

    def _covering_leaf(self, key: Key):
        """Leaf equal to key or an ancestor of it, if any."""
        level, ix, iy = key
        while level >= 0:
            if (level, ix, iy) in self._leaves:
                return (level, ix, iy)
            level, ix, iy = level - 1, ix >> 1, iy >> 1
        return None

    def _facing_leaves(self, key: Key, direction: str, out: list):
        """Leaves under `key` adjacent to its face opposite `direction`."""
        if key in self._leaves:
            out.append(key)
            return
        level, ix, iy = key
        dx, dy = _DIRS[direction]
        # children on the side facing back toward the query cell
        if dx != 0:
            cx = 2 * ix if dx > 0 else 2 * ix + 1
            kids = [(level + 1, cx, 2 * iy), (level + 1, cx, 2 * iy + 1)]
        else:
            cy = 2 * iy if dy > 0 else 2 * iy + 1
            kids = [(level + 1, 2 * ix, cy), (level + 1, 2 * ix + 1, cy)]
        for kid in kids:
            self._facing_leaves(kid, direction, out)

    def edge_neighbors(self, key: Key, direction: str) -> list:
        """Leaf neighbors across one edge; [] on the domain boundary."""
        level, ix, iy = key
        dx, dy = _DIRS[direction]
        tx, ty = ix + dx, iy + dy
        if not (0 <= tx < self.cells_per_side(level) and 0 <= ty < self.cells_per_side(level)):
            return []
        target = (level, tx, ty)
        cover = self._covering_leaf(target)
        if cover is not None:
            return [cover]
        out: list = []
        self._facing_leaves(target, direction, out)
        return out

    def corner_leaves(self, level: int, cx: int, cy: int) -> list:
        """Leaves whose closure contains the grid corner (cx, cy) at `level`."""
        out = []
        per = self.cells_per_side(level)
        for ix, right in ((cx - 1, True), (cx, False)):
            for iy, top in ((cy - 1, True), (cy, False)):
                if not (0 <= ix < per and 0 <= iy < per):
                    continue
                key = self._covering_leaf((level, ix, iy))
                if key is None:
                    # descend toward the corner: it stays the same corner of
                    # the child nearest to it at every level
                    key = (level, ix, iy)
                    while key not in self._leaves:
                        lv, kx, ky = key
                        key = (
                            lv + 1,
                            2 * kx + (1 if right else 0),
                            2 * ky + (1 if top else 0),
                        )
                if key not in out:
                    out.append(key)
        return out

    def touching_leaves(self, key: Key) -> list:
        """All leaves sharing at least a point with `key` (edge or corner)."""
        level, ix, iy = key
        found = set()
        for d in _DIRS:
            found.update(self.edge_neighbors(key, d))
        for cx, cy in ((ix, iy), (ix + 1, iy), (ix, iy + 1), (ix + 1, iy + 1)):
            found.update(self.corner_leaves(level, cx, cy))
        found.discard(key)
        return sorted(found)

    def balance(self):
        """Enforce 1-irregularity: edge-adjacent leaves differ by <= 1 level."""
        from collections import deque

        queue = deque(self._leaves)
        while queue:
            key = queue.popleft()
            if key not in self._leaves:
                continue
            for d in _DIRS:
                nbs = self.edge_neighbors(key, d)
                if any(nb[0] > key[0] + 1 for nb in nbs):
                    self.refine(key)
                    level, ix, iy = key
                    for dx in (0, 1):
                        for dy in (0, 1):
                            queue.append((level + 1, 2 * ix + dx, 2 * iy + dy))
                    for d2 in _DIRS:
                        queue.extend(self.edge_neighbors(key, d2))
                    break

    def max_level(self) -> int:
        return max(k[0] for k in self._leaves)


def build_initial_mesh(n: int, origin=(-2.0, -2.0), size: float = 4.0) -> QuadMesh:
    """Uniform n x n Cartesian mesh over the square domain."""
    return QuadMesh(n, origin=origin, size=size)


def _leaf_is_cut(ls: LevelSet, mesh: QuadMesh, key: Key) -> bool:
    from .levelset import classify_cell

    cls = classify_cell(ls, mesh.bounds(key))
    return cls in (ElementClass.CUT_PROPER, ElementClass.CUT_IMPROPER)


def refine_interface_band(mesh: QuadMesh, ls: LevelSet, levels: int) -> QuadMesh:
    """Refine every interface leaf and its edge/vertex neighbors `levels` times."""
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    for _ in range(levels):
        cut = [k for k in mesh.leaves() if _leaf_is_cut(ls, mesh, k)]
        marked = set(cut)
        for k in cut:
            marked.update(mesh.touching_leaves(k))
        for k in sorted(marked):
            if mesh.is_leaf(k):
                mesh.refine(k)
        mesh.balance()
    return mesh


# -- macro-elements ----------------------------------------------------


@dataclass
class MacroElement:
    """A mesh element of the induced mesh: one leaf or a merged union."""

    id: int
    members: tuple  # sorted leaf keys
    kind: str  # "plain" | "merged_interface"
    representative: Key
    bbox: tuple  # (x0, y0, x1, y1)
    h: float  # max member side length
    h_min: float
    sides: tuple  # (1,), (2,) or (1, 2)
    cut: PolygonCut | None = None  # union-boundary topology for cut macros
    boundary: np.ndarray | None = None  # union polygon vertices (CCW)
    member_cuts: dict = field(default_factory=dict)  # leaf key -> PolygonCut
    _mesh: QuadMesh = None
    _ls: LevelSet = None

    @property
    def is_cut(self) -> bool:
        return self.cut is not None

    @property
    def eta(self) -> float:
        return self.cut.eta if self.cut is not None else 0.0

    def theta(self, p: int) -> float:
        return penalty_amplification(self.eta, p, cut=self.is_cut)

    def area(self) -> float:
        return sum(self._mesh.h(k) ** 2 for k in self.members)

    def member_pieces(self):
        """(bounds, PolygonCut|None) per member, for the quadrature module."""
        return [
            (self._mesh.bounds(k), self.member_cuts.get(k)) for k in self.members
        ]


def _union_boundary(mesh: QuadMesh, members) -> np.ndarray:
    """Maximal-edge CCW boundary polygon of a union of leaf squares."""
    lmax = max(k[0] for k in members)
    edges = {}

    def add(a, b):
        if (b, a) in edges:
            del edges[(b, a)]
        else:
            edges[(a, b)] = True

    for level, ix, iy in members:
        f = 1 << (lmax - level)
        x0, y0 = ix * f, iy * f
        x1, y1 = x0 + f, y0 + f
        for u in range(x0, x1):  # bottom, +x
            add((u, y0), (u + 1, y0))
        for v in range(y0, y1):  # right, +y
            add((x1, v), (x1, v + 1))
        for u in range(x1, x0, -1):  # top, -x
            add((u, y1), (u - 1, y1))
        for v in range(y1, y0, -1):  # left, -y
            add((x0, v), (x0, v - 1))

    start_map = {a: b for (a, b) in edges}
    if len(start_map) != len(edges):
        raise InconsistentTopologyError("union boundary is not a simple loop")
    start = min(start_map)
    loop = [start]
    cur = start_map[start]
    while cur != start:
        loop.append(cur)
        cur = start_map[cur]
    if len(loop) != len(edges):
        raise InconsistentTopologyError("union has a disconnected boundary")

    # merge collinear runs into maximal edges
    verts = []
    m = len(loop)
    for i in range(m):
        prev = loop[(i - 1) % m]
        here = loop[i]
        nxt = loop[(i + 1) % m]
        d1 = (here[0] - prev[0], here[1] - prev[1])
        d2 = (nxt[0] - here[0], nxt[1] - here[1])
        if d1[0] * d2[1] - d1[1] * d2[0] != 0:
            verts.append(here)
    h_fine = mesh.h0 / (1 << lmax)
    out = np.array(
        [
            (mesh.origin[0] + vx * h_fine, mesh.origin[1] + vy * h_fine)
            for vx, vy in verts
        ]
    )
    return out


@dataclass
class Face:
    """A face of the induced mesh with a fixed unit normal.

    Interior/boundary faces are straight segments p0 -> p1; the normal is
    +x/+y for interior faces and outward for boundary faces; the minus
    owner is on the -normal side.  Interface faces are the per-macro arcs
    (geometry accessed through the owner macro).
    """

    kind: str  # "interior" | "boundary" | "interface"
    minus: int  # macro id
    plus: int | None
    h_f: float
    p0: np.ndarray | None = None
    p1: np.ndarray | None = None
    normal: np.ndarray | None = None
    length: float = 0.0
    theta_ids: tuple = ()  # macro ids whose closure touches the face
    sort_key: tuple = ()

    def theta_f(self, macros, p: int) -> float:
        return max(macros[i].theta(p) for i in self.theta_ids)


@dataclass
class InducedMesh:
    mesh: QuadMesh
    ls: LevelSet
    delta0: float
    macros: list
    leaf_macro: dict
    faces: list = field(default_factory=list)

    @property
    def interface_macros(self):
        return [m for m in self.macros if m.is_cut]

    def total_area(self) -> float:
        return sum(m.area() for m in self.macros)

    def dump(self, fp):
        """Plain-text debug dump: one record per macro-element and face."""
        for m in self.macros:
            eta = f"{m.eta:.12g}" if m.is_cut else "0"
            theta1 = f"{m.theta(1):.12g}"
            fp.write(
                f"macro {m.id} kind={m.kind} members={list(m.members)} "
                f"eta={eta} theta_p1={theta1}\n"
            )
        for f in self.faces:
            if f.kind == "interface":
                fp.write(
                    f"face interface macro={f.minus} h_F={f.h_f:.12g}\n"
                )
            else:
                fp.write(
                    f"face {f.kind} p0=({f.p0[0]:.12g},{f.p0[1]:.12g}) "
                    f"p1=({f.p1[0]:.12g},{f.p1[1]:.12g}) "
                    f"n=({f.normal[0]:.12g},{f.normal[1]:.12g}) "
                    f"minus={f.minus} plus={f.plus} h_F={f.h_f:.12g}\n"
                )


def _macro_cut_data(mesh: QuadMesh, ls: LevelSet, members, delta0: float):
    """Union polygon + cut topology for a candidate macro (None if uncut)."""
    if len(members) == 1:
        verts = None
        poly = polygon_cut(
            ls,
            _square_verts(mesh.bounds(members[0])),
            delta0,
        )
        boundary = poly.vertices
    else:
        boundary = _union_boundary(mesh, members)
        poly = polygon_cut(ls, boundary, delta0)
    return poly, boundary


def _square_verts(bounds):
    x0, y0, x1, y1 = bounds
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def build_induced_mesh(
    mesh: QuadMesh, ls: LevelSet, delta0: float = 0.25, max_rounds: int = 3
) -> InducedMesh:
    """Merge small cut leaves until all interface macro-elements are large."""
    leaves = mesh.leaves()
    leaf_cut: dict = {}
    for k in leaves:
        cut = polygon_cut(ls, _square_verts(mesh.bounds(k)), delta0)
        if cut.element_class is ElementClass.CUT_IMPROPER:
            raise ImproperCutError(k)
        if cut.element_class is ElementClass.CUT_PROPER:
            leaf_cut[k] = cut

    # union-find over leaves
    parent = {k: k for k in leaves}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    def groups():
        g = {}
        for k in leaves:
            g.setdefault(find(k), []).append(k)
        return g

    def group_cut_data(members):
        if not any(k in leaf_cut for k in members):
            return None, None
        return _macro_cut_data(mesh, ls, sorted(members), delta0)

    for round_ in range(max_rounds + 1):
        small = []
        cut_cache = {}
        for root, members in groups().items():
            poly, boundary = group_cut_data(members)
            if poly is None:
                continue
            if poly.element_class is not ElementClass.CUT_PROPER:
                raise MergeFailureError(
                    f"macro {sorted(members)} has an improper union cut"
                )
            cut_cache[root] = (poly, boundary)
            if not all(poly.large):
                frac = poly.edge_fractions
                deficiency = min(
                    np.min(frac[:, s][frac[:, s] > 1e-12])
                    for s in (0, 1)
                    if not poly.large[s]
                )
                small.append((deficiency, root, members, poly))
        if not small:
            break
        if round_ == max_rounds:
            raise MergeFailureError(
                f"{len(small)} small cut macro-elements remain after "
                f"{max_rounds} merge rounds"
            )
        small.sort(key=lambda t: (t[0], t[1]))
        for _, root, members, poly in small:
            if find(members[0]) != root:
                continue  # absorbed earlier this round
            deficient = [s + 1 for s in (0, 1) if not poly.large[s]]
            best = None
            h_members = [mesh.h(k) for k in members]
            for k in members:
                for d in _DIRS:
                    for nb in mesh.edge_neighbors(k, d):
                        if find(nb) == root:
                            continue
                        seg = _shared_segment(mesh, k, nb)
                        for side in deficient:
                            l1, l2 = segment_side_lengths(ls, seg[0], seg[1])
                            gain = l1 if side == 1 else l2
                            # (H1): keep max member h <= 2 * min member h
                            nb_members = [
                                kk for kk in leaves if find(kk) == find(nb)
                            ]
                            hs = h_members + [mesh.h(kk) for kk in nb_members]
                            if max(hs) > 2.0 * min(hs) + 1e-12:
                                continue
                            cand = (gain, -nb[0], nb, d)
                            if best is None or cand > best:
                                best = cand
            if best is None or best[0] <= 1e-12:
                raise MergeFailureError(
                    f"no admissible merge neighbor for macro {sorted(members)}"
                )
            union(members[0], best[2])

    # finalize macros
    macro_list = []
    leaf_macro = {}
    for mid, (root, members) in enumerate(sorted(groups().items())):
        members = tuple(sorted(members))
        poly, boundary = group_cut_data(members)
        hs = [mesh.h(k) for k in members]
        bxs = [mesh.bounds(k) for k in members]
        bbox = (
            min(b[0] for b in bxs),
            min(b[1] for b in bxs),
            max(b[2] for b in bxs),
            max(b[3] for b in bxs),
        )
        if poly is None:
            center = np.array(
                [[0.5 * (bbox[0] + bbox[2]), 0.5 * (bbox[1] + bbox[3])]]
            )
            sides = (1,) if side_of(ls, center)[0] < 0 else (2,)
            macro = MacroElement(
                mid, members, "plain", members[0], bbox, max(hs), min(hs),
                sides, _mesh=mesh, _ls=ls,
            )
        else:
            kind = "plain" if len(members) == 1 else "merged_interface"
            macro = MacroElement(
                mid, members, kind, members[0], bbox, max(hs), min(hs),
                (1, 2), cut=poly, boundary=boundary,
                member_cuts={k: leaf_cut[k] for k in members if k in leaf_cut},
                _mesh=mesh, _ls=ls,
            )
        macro_list.append(macro)
        for k in members:
            leaf_macro[k] = mid

    imesh = InducedMesh(mesh, ls, delta0, macro_list, leaf_macro)
    imesh.faces = enumerate_faces(imesh)
    return imesh


def _shared_segment(mesh: QuadMesh, a: Key, b: Key):
    """Physical endpoints of the shared edge portion of adjacent leaves."""
    (x0a, y0a, x1a, y1a) = mesh.bounds(a)
    (x0b, y0b, x1b, y1b) = mesh.bounds(b)
    if abs(x1a - x0b) < 1e-14 or abs(x0a - x1b) < 1e-14:
        x = x1a if abs(x1a - x0b) < 1e-14 else x0a
        lo, hi = max(y0a, y0b), min(y1a, y1b)
        return np.array([x, lo]), np.array([x, hi])
    y = y1a if abs(y1a - y0b) < 1e-14 else y0a
    lo, hi = max(x0a, x0b), min(x1a, x1b)
    return np.array([lo, y]), np.array([hi, y])


def enumerate_faces(imesh: InducedMesh) -> list:
    """Interior, boundary, and interface faces with normals and h_F."""
    mesh, macros, leaf_macro = imesh.mesh, imesh.macros, imesh.leaf_macro
    faces = []

    def corner_macros(level, cx, cy):
        return {leaf_macro[k] for k in mesh.corner_leaves(level, cx, cy)}

    for key in mesh.leaves():
        level, ix, iy = key
        mid = leaf_macro[key]
        x0, y0, x1, y1 = mesh.bounds(key)
        for d, (dx, dy) in _DIRS.items():
            nbs = mesh.edge_neighbors(key, d)
            if not nbs:
                # boundary edge (outward normal)
                if d == "+x":
                    p0, p1, nrm, c0, c1 = (x1, y0), (x1, y1), (1.0, 0.0), (ix + 1, iy), (ix + 1, iy + 1)
                elif d == "-x":
                    p0, p1, nrm, c0, c1 = (x0, y0), (x0, y1), (-1.0, 0.0), (ix, iy), (ix, iy + 1)
                elif d == "+y":
                    p0, p1, nrm, c0, c1 = (x0, y1), (x1, y1), (0.0, 1.0), (ix, iy + 1), (ix + 1, iy + 1)
                else:
                    p0, p1, nrm, c0, c1 = (x0, y0), (x1, y0), (0.0, -1.0), (ix, iy), (ix + 1, iy)
                tids = corner_macros(level, *c0) | corner_macros(level, *c1) | {mid}
                faces.append(
                    Face(
                        "boundary", mid, None, macros[mid].h,
                        p0=np.array(p0), p1=np.array(p1), normal=np.array(nrm),
                        length=float(np.hypot(p1[0] - p0[0], p1[1] - p0[1])),
                        theta_ids=tuple(sorted(tids)),
                        sort_key=(1, key, d),
                    )
                )
                continue
            for nb in nbs:
                nmid = leaf_macro[nb]
                if nmid == mid:
                    continue
                finer = nb[0] < level  # we are finer than the neighbor
                if not (finer or (nb[0] == level and d in ("+x", "+y"))):
                    continue
                # face = this leaf's full edge; normal along +x or +y
                if d in ("+x", "-x"):
                    x = x1 if d == "+x" else x0
                    gx = ix + 1 if d == "+x" else ix
                    p0, p1 = np.array([x, y0]), np.array([x, y1])
                    nrm = np.array([1.0, 0.0])
                    corners = ((gx, iy), (gx, iy + 1))
                else:
                    y = y1 if d == "+y" else y0
                    gy = iy + 1 if d == "+y" else iy
                    p0, p1 = np.array([x0, y]), np.array([x1, y])
                    nrm = np.array([0.0, 1.0])
                    corners = ((ix, gy), (ix + 1, gy))
                minus, plus = (mid, nmid) if d in ("+x", "+y") else (nmid, mid)
                h_f = 0.5 * (macros[mid].h + macros[nmid].h)
                tids = {mid, nmid}
                for c in corners:
                    tids |= corner_macros(level, *c)
                faces.append(
                    Face(
                        "interior", minus, plus, h_f,
                        p0=p0, p1=p1, normal=nrm,
                        length=float(np.linalg.norm(p1 - p0)),
                        theta_ids=tuple(sorted(tids)),
                        sort_key=(0, key, d),
                    )
                )

    # interface faces: one per cut macro (minus = side-1 copy, plus = side-2)
    for m in macros:
        if not m.is_cut:
            continue
        tids = {m.id}
        for k, cut in m.member_cuts.items():
            for e, xpt in zip(cut.crossing_edges, cut.crossings):
                d = ("-y", "+x", "+y", "-x")[e]
                tol = 1e-12 * mesh.h(k)
                for nb in mesh.edge_neighbors(k, d):
                    b = mesh.bounds(nb)
                    if (
                        b[0] - tol <= xpt[0] <= b[2] + tol
                        and b[1] - tol <= xpt[1] <= b[3] + tol
                    ):
                        tids.add(leaf_macro[nb])
        faces.append(
            Face(
                "interface", m.id, m.id, m.h,
                theta_ids=tuple(sorted(tids)),
                sort_key=(2, m.members[0], ""),
            )
        )

    faces.sort(key=lambda f: f.sort_key)
    return faces
