"""Domain catalogue, triangulation with fluid/solid tags, and mesh JSON I/O.

Cells carry a subdomain tag (``FLUID`` or ``SOLID``) and boundary facets a
location tag (``OUTER`` for the container wall, ``INTERFACE`` for the solid
boundary).  Curved boundaries are replaced by inscribed polygons.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay

from .errors import InvalidSpec, MeshError

FLUID, SOLID = 0, 1
OUTER, INTERFACE = 0, 1
CELL_TAG_NAMES = {FLUID: "Fluid", SOLID: "Solid"}
FACET_TAG_NAMES = {OUTER: "Outer", INTERFACE: "Interface"}

KINDS = ("interval", "disc_in_square", "disc_in_disc", "square_in_square", "ball")

MIN_ANGLE_DEG = 20.0


@dataclass(frozen=True)
class DomainSpec:
    """Description of one catalogue domain.

    ``kind`` selects the geometry; the remaining fields are read according to
    the kind:

    ``interval``          a, b
    ``disc_in_square``    side (square side L), radius (disc R), center
    ``disc_in_disc``      outer_radius, radius
    ``square_in_square``  side (outer), inner_side
    ``ball``              radius (analytic only, no cells)
    """

    kind: str
    h: float = 0.1
    a: float = -1.0
    b: float = 1.0
    side: float = 4.0
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    outer_radius: float = 2.0
    inner_side: float = 1.0

    @classmethod
    def interval(cls, a: float, b: float, h: float) -> "DomainSpec":
        return cls("interval", h=h, a=a, b=b)

    @classmethod
    def disc_in_square(cls, side: float, radius: float, h: float,
                       center=(0.0, 0.0)) -> "DomainSpec":
        return cls("disc_in_square", h=h, side=side, radius=radius,
                   center=(float(center[0]), float(center[1])))

    @classmethod
    def disc_in_disc(cls, outer_radius: float, radius: float, h: float) -> "DomainSpec":
        return cls("disc_in_disc", h=h, outer_radius=outer_radius, radius=radius)

    @classmethod
    def square_in_square(cls, side: float, inner_side: float, h: float) -> "DomainSpec":
        return cls("square_in_square", h=h, side=side, inner_side=inner_side)

    @classmethod
    def ball(cls, radius: float) -> "DomainSpec":
        return cls("ball", h=radius, radius=radius)

    _FIELDS = {
        "interval": ("a", "b"),
        "disc_in_square": ("side", "radius", "center"),
        "disc_in_disc": ("outer_radius", "radius"),
        "square_in_square": ("side", "inner_side"),
        "ball": ("radius",),
    }

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "h": self.h}
        for name in self._FIELDS[self.kind]:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind not in KINDS:
            raise InvalidSpec(f"domain.kind must be one of {KINDS}, got {kind!r}")
        allowed = set(cls._FIELDS[kind]) | {"h"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidSpec(f"unknown domain key(s) for {kind}: {sorted(unknown)}")
        if "center" in data:
            data["center"] = tuple(float(c) for c in data["center"])
        return cls(kind, **data)

    def validate(self) -> None:
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidSpec(f"mesh size h must be positive, got {self.h}")
        k = self.kind
        if k not in KINDS:
            raise InvalidSpec(f"unknown domain kind {k!r}")
        if k == "interval":
            if not self.b > self.a:
                raise InvalidSpec("interval requires a < b")
        elif k == "disc_in_square":
            cx, cy = self.center
            half = self.side / 2
            if self.radius <= 0 or self.side <= 0:
                raise InvalidSpec("disc_in_square requires positive side and radius")
            if max(abs(cx), abs(cy)) + self.radius >= half:
                raise InvalidSpec("disc is not strictly inside the square")
        elif k == "disc_in_disc":
            if not 0 < self.radius < self.outer_radius:
                raise InvalidSpec("disc_in_disc requires 0 < radius < outer_radius")
        elif k == "square_in_square":
            if not 0 < self.inner_side < self.side:
                raise InvalidSpec("square_in_square requires 0 < inner_side < side")
        elif k == "ball":
            if self.radius <= 0:
                raise InvalidSpec("ball radius must be positive")


@dataclass(eq=False)
class Mesh:
    """Simplicial mesh with subdomain and boundary tags.

    Attributes
    ----------
    vertices : (nv, d) array
    cells : (nc, d+1) int array, counter-clockwise in 2D
    cell_tag : (nc,) int array of ``FLUID``/``SOLID``
    facets : (nf, d) int array of boundary facet vertex indices
    facet_tag : (nf,) int array of ``OUTER``/``INTERFACE``
    interface_normal : (n_interface, d) outward unit normals of the solid,
        ordered like ``facets[facet_tag == INTERFACE]``
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_tag: np.ndarray
    facets: np.ndarray
    facet_tag: np.ndarray
    interface_normal: np.ndarray
    spec: DomainSpec | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def interface_facets(self) -> np.ndarray:
        return self.facets[self.facet_tag == INTERFACE]

    @property
    def outer_facets(self) -> np.ndarray:
        return self.facets[self.facet_tag == OUTER]

    def cell_volumes(self) -> np.ndarray:
        v = self.vertices[self.cells]
        if self.dim == 1:
            return (v[:, 1, 0] - v[:, 0, 0])
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self, tag: int | None = None) -> float:
        vol = self.cell_volumes()
        if tag is not None:
            vol = vol[self.cell_tag == tag]
        return float(vol.sum())

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges ``(ne, 2)`` and per-cell edge ids ``(nc, 3)``.

        Local edge order is (0,1), (1,2), (0,2).  In 1D every cell is its own edge.
        """
        if self.dim == 1:
            return self.cells.copy(), np.arange(self.n_cells)[:, None]
        loc = np.array([[0, 1], [1, 2], [0, 2]])
        all_e = np.sort(self.cells[:, loc].reshape(-1, 2), axis=1)
        uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    def min_angle(self) -> float:
        """Smallest interior angle in degrees over all cells."""
        if self.dim != 2 or self.n_cells == 0:
            return 180.0
        v = self.vertices[self.cells]
        worst = 180.0
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            worst = min(worst, float(np.degrees(np.arccos(np.clip(c, -1, 1))).min()))
        return worst

    def check(self) -> None:
        """Raise :class:`MeshError` unless every structural invariant holds."""
        if self.n_cells == 0:
            return
        if self.dim == 2 and np.any(self.cell_volumes() <= 0):
            raise MeshError("cells must be counter-clockwise with positive area")
        if self.dim == 1:
            return
        edges, cell_edges = self.edges
        owners = [[] for _ in range(len(edges))]
        for c, row in enumerate(cell_edges):
            for e in row:
                owners[e].append(c)
        lookup = {tuple(e): i for i, e in enumerate(edges)}
        for f, tag in zip(self.facets, self.facet_tag):
            cs = owners[lookup[tuple(sorted(f))]]
            tags = sorted(self.cell_tag[cs])
            if tag == INTERFACE and tags != [FLUID, SOLID]:
                raise MeshError("interface facet not shared by one fluid and one solid cell")
            if tag == OUTER and tags != [FLUID]:
                raise MeshError("outer facet must belong to exactly one fluid cell")
        n = np.linalg.norm(self.interface_normal, axis=1)
        if not np.allclose(n, 1.0, atol=1e-14):
            raise MeshError("interface normals are not unit vectors")

    # --- JSON -------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "cell_tags": [CELL_TAG_NAMES[int(t)] for t in self.cell_tag],
            "facets": self.facets.tolist(),
            "facet_tags": [FACET_TAG_NAMES[int(t)] for t in self.facet_tag],
            "interface_normals": self.interface_normal.tolist(),
            "domain": self.spec.to_dict() if self.spec is not None else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Mesh":
        ct = {v: k for k, v in CELL_TAG_NAMES.items()}
        ft = {v: k for k, v in FACET_TAG_NAMES.items()}
        verts = np.asarray(data["vertices"], dtype=float)
        dim = verts.shape[1] if verts.size else 2
        spec = DomainSpec.from_dict(data["domain"]) if data.get("domain") else None
        return cls(
            vertices=verts.reshape(-1, dim),
            cells=np.asarray(data["cells"], dtype=np.int64).reshape(-1, dim + 1),
            cell_tag=np.array([ct[t] for t in data["cell_tags"]], dtype=np.int64),
            facets=np.asarray(data["facets"], dtype=np.int64).reshape(-1, dim),
            facet_tag=np.array([ft[t] for t in data["facet_tags"]], dtype=np.int64),
            interface_normal=np.asarray(data["interface_normals"], dtype=float).reshape(-1, dim),
            spec=spec,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# --- signed distance functions (negative inside) -----------------------------

def _sd_circle(center, r):
    c = np.asarray(center, dtype=float)
    return lambda p: np.linalg.norm(p - c, axis=1) - r


def _sd_box(center, half):
    c = np.asarray(center, dtype=float)

    def d(p):
        q = np.abs(p - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside
    return d


def _sd_diff(da, db):
    return lambda p: np.maximum(da(p), -db(p))


def _circle_points(center, r, h):
    n = max(8, int(math.ceil(2 * math.pi * r / h)))
    t = 2 * math.pi * np.arange(n) / n
    return np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)])


def _square_points(center, half, h):
    n = max(2, int(math.ceil(2 * half / h)))
    s = np.linspace(-half, half, n + 1)[:-1]
    cx, cy = center
    sides = [
        np.column_stack([s, np.full(n, -half)]),
        np.column_stack([np.full(n, half), s]),
        np.column_stack([-s, np.full(n, half)]),
        np.column_stack([np.full(n, -half), -s]),
    ]
    return np.vstack(sides) + np.array([cx, cy])


def _lattice(lo, hi, h):
    dy = h * math.sqrt(3) / 2
    ys = np.arange(lo[1], hi[1] + dy, dy)
    pts = []
    for j, y in enumerate(ys):
        xs = np.arange(lo[0] + (h / 2 if j % 2 else 0.0), hi[0] + h, h)
        pts.append(np.column_stack([xs, np.full_like(xs, y)]))
    return np.vstack(pts)


def _grad(sd, p, eps):
    ex = np.array([eps, 0.0])
    ey = np.array([0.0, eps])
    gx = (sd(p + ex) - sd(p - ex)) / (2 * eps)
    gy = (sd(p + ey) - sd(p - ey)) / (2 * eps)
    g = np.column_stack([gx, gy])
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.where(nrm > 0, nrm, 1.0)


def _triangulate(pts, keep: Callable[[np.ndarray], np.ndarray]):
    tri = Delaunay(pts)
    cells = tri.simplices
    cent = pts[cells].mean(axis=1)
    cells = cells[keep(cent)]
    v = pts[cells]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    cells = cells[np.abs(area) > 1e-14 * np.max(np.abs(area))]
    area = area[np.abs(area) > 1e-14 * np.max(np.abs(area))]
    flip = area < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    return cells


def _relaxed_region(fixed, sd, h, n_iter=60):
    """Distribute free points in ``{sd < 0}`` and smooth them against ``fixed``.

    Returns (points, cells) with the fixed points first, in their given order.
    """
    bb_lo = fixed.min(axis=0)
    bb_hi = fixed.max(axis=0)
    clear = 0.55 * h
    free = _lattice(bb_lo, bb_hi, h)
    free = free[sd(free) < -clear]
    nf = len(fixed)
    p = np.vstack([fixed, free])
    keep = lambda c: sd(c) < 0
    if len(free) == 0:
        return p, _triangulate(p, keep)
    for _ in range(n_iter):
        cells = _triangulate(p, keep)
        bars = np.unique(np.sort(cells[:, [0, 1, 1, 2, 0, 2]].reshape(-1, 2), axis=1), axis=0)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        length = np.linalg.norm(vec, axis=1)
        l0 = 1.2 * h * math.sqrt(np.sum(length ** 2) / (len(length) * h * h))
        force = np.maximum(l0 - length, 0.0)
        fvec = (force / length)[:, None] * vec
        move = np.zeros_like(p)
        np.add.at(move, bars[:, 0], fvec)
        np.add.at(move, bars[:, 1], -fvec)
        move[:nf] = 0.0
        p = p + 0.2 * move
        q = p[nf:]
        d = sd(q)
        bad = d > -clear
        if np.any(bad):
            g = _grad(sd, q[bad], 1e-7 * h)
            q[bad] -= (d[bad] + clear)[:, None] * g
        p[nf:] = q
        if np.max(np.linalg.norm(0.2 * move[nf:], axis=1), initial=0.0) < 1e-3 * h:
            break
    return p, _triangulate(p, keep)


def _interval_mesh(spec: DomainSpec) -> Mesh:
    n = int(math.ceil((spec.b - spec.a) / spec.h - 1e-9))
    x = np.linspace(spec.a, spec.b, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(
        vertices=x[:, None],
        cells=cells,
        cell_tag=np.full(n, SOLID, dtype=np.int64),
        facets=np.array([[0], [n]]),
        facet_tag=np.array([INTERFACE, INTERFACE]),
        interface_normal=np.array([[-1.0], [1.0]]),
        spec=spec,
    )


def _two_region_mesh(spec, iface_pts, sd_solid, outer_pts, sd_outer) -> Mesh:
    h = spec.h
    n_if = len(iface_pts)
    # solid region: convex, so the Delaunay hull reproduces the interface polygon
    ps, cs = _relaxed_region(iface_pts, sd_solid, h)
    sd_fluid = _sd_diff(sd_outer, sd_solid)
    fixed_f = np.vstack([iface_pts, outer_pts])
    pf, cf = _relaxed_region(fixed_f, sd_fluid, h)
    n_s_free = len(ps) - n_if
    n_f_free = len(pf) - len(fixed_f)
    # global order: interface, solid free, outer boundary, fluid free
    verts = np.vstack([iface_pts, ps[n_if:], outer_pts, pf[len(fixed_f):]])
    solid_map = np.arange(len(ps))
    fluid_map = np.empty(len(pf), dtype=np.int64)
    fluid_map[:n_if] = np.arange(n_if)
    off = n_if + n_s_free
    fluid_map[n_if:len(fixed_f)] = off + np.arange(len(outer_pts))
    fluid_map[len(fixed_f):] = off + len(outer_pts) + np.arange(n_f_free)
    cells = np.vstack([solid_map[cs], fluid_map[cf]])
    tags = np.concatenate([np.full(len(cs), SOLID), np.full(len(cf), FLUID)])

    n_out = len(outer_pts)
    iface = np.column_stack([np.arange(n_if), np.roll(np.arange(n_if), -1)])
    outer = off + np.column_stack([np.arange(n_out), np.roll(np.arange(n_out), -1)])
    # outward solid normal for a counter-clockwise polygon: rotate tangent clockwise
    t = verts[iface[:, 1]] - verts[iface[:, 0]]
    normal = np.column_stack([t[:, 1], -t[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    used = np.zeros(len(verts), dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        raise MeshError("triangulation dropped vertices")
    mesh = Mesh(
        vertices=verts,
        cells=cells.astype(np.int64),
        cell_tag=tags.astype(np.int64),
        facets=np.vstack([outer, iface]).astype(np.int64),
        facet_tag=np.concatenate([np.full(n_out, OUTER), np.full(n_if, INTERFACE)]).astype(np.int64),
        interface_normal=normal,
        spec=spec,
    )
    _check_conforming(mesh)
    mesh.check()
    if mesh.min_angle() < MIN_ANGLE_DEG:
        raise MeshError(f"mesh quality too low: min angle {mesh.min_angle():.1f} deg")
    return mesh


def _check_conforming(mesh: Mesh) -> None:
    edges, _ = mesh.edges
    present = {tuple(e) for e in edges}
    for f in mesh.facets:
        if tuple(sorted(f)) not in present:
            raise MeshError("boundary polygon edge missing from triangulation")


def build_mesh(spec: DomainSpec) -> Mesh:
    """Triangulate a catalogue domain.

    Curved boundaries are replaced by inscribed polygons with edge length at
    most ``h``.  ``ball`` returns an empty 3D mesh used as an analytic marker.

    Raises
    ------
    InvalidSpec
        If the inner region is not strictly contained or ``h <= 0``.
    MeshError
        If the generated triangulation violates the mesh invariants.
    """
    spec.validate()
    if spec.kind == "interval":
        return _interval_mesh(spec)
    if spec.kind == "ball":
        return Mesh(np.zeros((0, 3)), np.zeros((0, 4), dtype=np.int64),
                    np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.int64),
                    np.zeros(0, dtype=np.int64), np.zeros((0, 3)), spec=spec)
    h = spec.h
    if spec.kind == "disc_in_square":
        c = spec.center
        half = spec.side / 2
        gap = half - max(abs(c[0]), abs(c[1])) - spec.radius
        if gap < 1.2 * h:
            raise MeshError("fluid gap narrower than 1.2 h; refine the mesh")
        iface = _circle_points(c, spec.radius, h)
        outer = _square_points((0.0, 0.0), half, h)
        return _two_region_mesh(spec, iface, _sd_circle(c, spec.radius),
                                outer, _sd_box((0.0, 0.0), half))
    if spec.kind == "disc_in_disc":
        if spec.outer_radius - spec.radius < 1.2 * h:
            raise MeshError("fluid gap narrower than 1.2 h; refine the mesh")
        iface = _circle_points((0.0, 0.0), spec.radius, h)
        outer = _circle_points((0.0, 0.0), spec.outer_radius, h)
        return _two_region_mesh(spec, iface, _sd_circle((0.0, 0.0), spec.radius),
                                outer, _sd_circle((0.0, 0.0), spec.outer_radius))
    if spec.kind == "square_in_square":
        if (spec.side - spec.inner_side) / 2 < 1.2 * h:
            raise MeshError("fluid gap narrower than 1.2 h; refine the mesh")
        iface = _square_points((0.0, 0.0), spec.inner_side / 2, h)
        outer = _square_points((0.0, 0.0), spec.side / 2, h)
        return _two_region_mesh(spec, iface, _sd_box((0.0, 0.0), spec.inner_side / 2),
                                outer, _sd_box((0.0, 0.0), spec.side / 2))
    raise InvalidSpec(f"unknown domain kind {spec.kind!r}")
