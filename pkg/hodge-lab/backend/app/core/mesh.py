"""
Oriented triangle meshes with boundary.

Builds, validates and measures the surfaces every other module works on:
- Generators for disk, annulus, rectangle, flat torus and icosphere
- ASCII OFF import/export with manifold and orientation checks
- Graph-geodesic distance to the boundary and smooth strip cutoffs

Design principles:
- A SimplicialManifold is immutable once built (arrays are read-only)
- Planar meshes carry z = 0; the torus keeps its period and every triangle is
  unwrapped with minimum-image displacements
- Hodge stars use the circumcentric dual when all of its measures are positive,
  the barycentric dual otherwise (whole mesh, never mixed)
"""

import logging
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

logger = logging.getLogger(__name__)

# ---- Generator limits ----
MIN_SECTORS = 3
MIN_RINGS = 1
MESH_KINDS = ("disk", "annulus", "rectangle", "torus", "sphere")

# Relative floor under which a dual measure counts as non-positive.
DUAL_POSITIVITY_FLOOR = 1e-10

# grad_bound * r never exceeds this for the quintic profile.
CUTOFF_CONSTANT = 8.0


class SimplicialManifold:
    """Oriented triangulated 2-manifold with (possibly empty) boundary."""

    def __init__(
        self,
        vertices: Sequence[Sequence[float]],
        triangles: Sequence[Sequence[int]],
        period: Optional[Tuple[float, float]] = None,
        meta: Optional[Dict] = None,
    ):
        """
        Build and validate a mesh.

        Args:
            vertices: (N, 2) or (N, 3) coordinates.
            triangles: (F, 3) vertex indices, consistently oriented.
            period: (Lx, Ly) for a flat torus, None otherwise.
            meta: Generator name and parameters, kept for reports.

        Raises:
            ValueError: If the input is not a valid oriented 2-manifold.
        """
        verts = np.asarray(vertices, dtype=float)
        tris = np.asarray(triangles, dtype=np.int64)

        # ---- Guard clauses ----
        if verts.ndim != 2 or verts.shape[1] not in (2, 3):
            raise ValueError("vertices must be an (N, 2) or (N, 3) array")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise ValueError("triangles must be a non-empty (F, 3) array")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise ValueError("triangle refers to a vertex index out of range")
        repeated = (
            (tris[:, 0] == tris[:, 1])
            | (tris[:, 1] == tris[:, 2])
            | (tris[:, 2] == tris[:, 0])
        )
        if repeated.any():
            raise ValueError(f"triangle {int(np.argmax(repeated))} repeats a vertex")
        unused = np.setdiff1d(np.arange(len(verts)), tris.ravel())
        if unused.size:
            raise ValueError(f"vertex {int(unused[0])} belongs to no triangle")

        if verts.shape[1] == 2:
            verts = np.hstack([verts, np.zeros((len(verts), 1))])

        self.vertices = verts
        self.triangles = tris
        self.period = None if period is None else (float(period[0]), float(period[1]))
        self.meta = dict(meta or {})

        self._build_edges()
        self._build_geometry()
        self._build_duals()
        self._freeze()

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    def _build_edges(self) -> None:
        tris = self.triangles
        n_tris = len(tris)
        # Local edge j runs from corner j to corner j + 1.
        heads = tris.ravel()
        tails = np.roll(tris, -1, axis=1).ravel()
        lo = np.minimum(heads, tails)
        hi = np.maximum(heads, tails)

        edges, inverse, counts = np.unique(
            np.stack([lo, hi], axis=1), axis=0, return_inverse=True, return_counts=True
        )
        inverse = np.asarray(inverse).reshape(-1)

        if counts.max() > 2:
            bad = int(np.argmax(counts))
            raise ValueError(
                f"non-manifold edge {tuple(int(v) for v in edges[bad])} "
                f"bounds {int(counts[bad])} triangles"
            )

        signs = np.where(heads == lo, 1, -1)
        sign_sum = np.bincount(inverse, weights=signs, minlength=len(edges))
        clash = (counts == 2) & (sign_sum != 0)
        if clash.any():
            bad = int(np.argmax(clash))
            raise ValueError(
                f"inconsistent triangle orientation across edge "
                f"{tuple(int(v) for v in edges[bad])}"
            )

        order = np.argsort(inverse, kind="stable")
        sorted_ids = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_ids[1:] != sorted_ids[:-1]
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_tris[sorted_ids[first], 0] = order[first] // 3
        edge_tris[sorted_ids[~first], 1] = order[~first] // 3

        self.edges = edges
        self.tri_edges = inverse.reshape(n_tris, 3)
        self.tri_edge_signs = signs.reshape(n_tris, 3)
        self.edge_tris = edge_tris
        self.boundary_edges = np.flatnonzero(counts == 1)
        self.interior_edges = np.flatnonzero(counts == 2)

        ends = self.edges[self.boundary_edges].ravel()
        self.boundary_vertices = np.unique(ends)
        degree = np.bincount(ends, minlength=len(self.vertices))
        if np.any(degree[self.boundary_vertices] != 2):
            bad = int(self.boundary_vertices[degree[self.boundary_vertices] != 2][0])
            raise ValueError(
                f"boundary vertex {bad} does not have exactly two boundary edges"
            )
        self.interior_vertices = np.setdiff1d(
            np.arange(len(self.vertices)), self.boundary_vertices
        )
        self._edge_lookup = {
            (int(a), int(b)): i for i, (a, b) in enumerate(self.edges)
        }

    def displacement(self, delta: np.ndarray) -> np.ndarray:
        """Minimum-image displacement (identity for non-periodic meshes)."""
        if self.period is None:
            return delta
        delta = np.array(delta, dtype=float, copy=True)
        for axis, length in enumerate(self.period):
            delta[..., axis] -= length * np.round(delta[..., axis] / length)
        return delta

    def _build_geometry(self) -> None:
        verts = self.vertices
        tris = self.triangles

        p0 = verts[tris[:, 0]]
        p1 = p0 + self.displacement(verts[tris[:, 1]] - p0)
        p2 = p0 + self.displacement(verts[tris[:, 2]] - p0)
        self.corners = np.stack([p0, p1, p2], axis=1)

        cross = np.cross(p1 - p0, p2 - p0)
        doubled = np.linalg.norm(cross, axis=1)
        if np.any(doubled <= 0.0):
            raise ValueError(f"triangle {int(np.argmin(doubled))} is degenerate")
        self.areas = 0.5 * doubled
        self.normals = cross / doubled[:, None]
        self.barycenters = self.corners.mean(axis=1)

        a, b = self.edges[:, 0], self.edges[:, 1]
        self.edge_vectors = self.displacement(verts[b] - verts[a])
        self.edge_lengths = np.linalg.norm(self.edge_vectors, axis=1)
        self.edge_midpoints = verts[a] + 0.5 * self.edge_vectors

        # Outward normals of boundary edges: oriented tangent x triangle normal.
        normals = np.zeros((len(self.boundary_edges), 3))
        for row, edge in enumerate(self.boundary_edges):
            tri = self.edge_tris[edge, 0]
            local = int(np.flatnonzero(self.tri_edges[tri] == edge)[0])
            tangent = self.tri_edge_signs[tri, local] * self.edge_vectors[edge]
            nu = np.cross(tangent, self.normals[tri])
            normals[row] = nu / np.linalg.norm(nu)
        self.boundary_normals = normals

    def _corner_cotangents(self) -> np.ndarray:
        """cot of the interior angle at each triangle corner, shape (F, 3)."""
        cots = np.empty((len(self.triangles), 3))
        for i in range(3):
            u = self.corners[:, (i + 1) % 3] - self.corners[:, i]
            v = self.corners[:, (i + 2) % 3] - self.corners[:, i]
            cots[:, i] = np.einsum("ij,ij->i", u, v) / (2.0 * self.areas)
        return cots

    def _build_duals(self) -> None:
        n_verts, n_edges = len(self.vertices), len(self.edges)
        cots = self._corner_cotangents()
        local_len = self.edge_lengths[self.tri_edges]

        # Local edge j is opposite corner j + 2.
        opposite = cots[:, [2, 0, 1]]
        star1 = np.bincount(
            self.tri_edges.ravel(), weights=0.5 * opposite.ravel(), minlength=n_edges
        )
        voronoi = np.empty_like(cots)
        for i in range(3):
            voronoi[:, i] = (
                local_len[:, i] ** 2 * cots[:, (i + 2) % 3]
                + local_len[:, (i + 2) % 3] ** 2 * cots[:, (i + 1) % 3]
            ) / 8.0
        star0 = np.bincount(
            self.triangles.ravel(), weights=voronoi.ravel(), minlength=n_verts
        )

        positive = (star0 > DUAL_POSITIVITY_FLOOR * star0.max()).all() and (
            star1 > DUAL_POSITIVITY_FLOOR * star1.max()
        ).all()
        if positive:
            self.dual_kind = "circumcentric"
        else:
            logger.warning(
                "Circumcentric dual has non-positive measures; using barycentric dual"
            )
            self.dual_kind = "barycentric"
            star0 = np.bincount(
                self.triangles.ravel(),
                weights=np.repeat(self.areas / 3.0, 3),
                minlength=n_verts,
            )
            mids = 0.5 * (self.corners + np.roll(self.corners, -1, axis=1))
            spokes = np.linalg.norm(mids - self.barycenters[:, None, :], axis=2)
            star1 = (
                np.bincount(self.tri_edges.ravel(), weights=spokes.ravel(), minlength=n_edges)
                / self.edge_lengths
            )

        self.star0 = star0
        self.star1 = star1
        self.star2 = 1.0 / self.areas
        self.dual_edge_lengths = star1 * self.edge_lengths

    def _freeze(self) -> None:
        for value in vars(self).values():
            if isinstance(value, np.ndarray):
                value.flags.writeable = False

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def has_boundary(self) -> bool:
        return self.boundary_edges.size > 0

    @property
    def is_planar(self) -> bool:
        """True for flat meshes in the z = 0 plane (torus included)."""
        return bool(np.all(np.abs(self.vertices[:, 2]) < 1e-12))

    def edge_index(self, a: int, b: int) -> Tuple[int, int]:
        """
        Look up the edge joining two vertices.

        Returns:
            (edge index, +1 if a -> b matches the canonical orientation else -1).

        Raises:
            ValueError: If a and b are not joined by an edge.
        """
        key = (min(a, b), max(a, b))
        if key not in self._edge_lookup:
            raise ValueError(f"vertices {a} and {b} are not joined by an edge")
        return self._edge_lookup[key], (1 if a < b else -1)


def euler_characteristic(mesh: SimplicialManifold) -> int:
    return mesh.n_vertices - mesh.n_edges + mesh.n_triangles


def mesh_size(mesh: SimplicialManifold) -> float:
    """h = longest edge."""
    return float(mesh.edge_lengths.max())


def perimeter(mesh: SimplicialManifold) -> float:
    return float(mesh.edge_lengths[mesh.boundary_edges].sum())


def boundary_loops(mesh: SimplicialManifold) -> List[np.ndarray]:
    """
    Walk the boundary into closed vertex cycles.

    Each cycle follows the orientation induced by the triangles, so the
    interior lies to the left for a counter-clockwise planar mesh.
    """
    successor: Dict[int, int] = {}
    for edge in mesh.boundary_edges:
        tri = mesh.edge_tris[edge, 0]
        local = int(np.flatnonzero(mesh.tri_edges[tri] == edge)[0])
        a, b = (int(v) for v in mesh.edges[edge])
        if mesh.tri_edge_signs[tri, local] < 0:
            a, b = b, a
        successor[a] = b

    loops = []
    remaining = set(successor)
    while remaining:
        start = min(remaining)
        cycle = [start]
        remaining.discard(start)
        current = successor[start]
        while current != start:
            cycle.append(current)
            remaining.discard(current)
            current = successor[current]
        loops.append(np.array(cycle, dtype=np.int64))
    return loops


def generator_loops(mesh: SimplicialManifold) -> List[np.ndarray]:
    """The horizontal and vertical generating cycles of a generated torus."""
    if mesh.meta.get("kind") != "torus":
        raise ValueError("generator loops are only known for generated tori")
    nx, ny = int(mesh.meta["nx"]), int(mesh.meta["ny"])
    horizontal = np.arange(nx, dtype=np.int64)
    vertical = np.arange(ny, dtype=np.int64) * nx
    return [horizontal, vertical]


# ----------------------------------------------------------------------
# Generators
# ----------------------------------------------------------------------


def _stitch(
    bottom: Sequence[int],
    bottom_keys: Sequence[float],
    top: Sequence[int],
    top_keys: Sequence[float],
) -> List[Tuple[int, int, int]]:
    """
    Triangulate the band between two sorted vertex rows by merging their keys.

    Both rows must start and end at the same key; a row of length one is a
    fan apex.
    """
    triangles = []
    i = k = 0
    while i < len(bottom) - 1 or k < len(top) - 1:
        advance_bottom = k == len(top) - 1 or (
            i < len(bottom) - 1 and bottom_keys[i + 1] <= top_keys[k + 1]
        )
        if advance_bottom:
            triangles.append((bottom[i], bottom[i + 1], top[k]))
            i += 1
        else:
            triangles.append((bottom[i], top[k + 1], top[k]))
            k += 1
    return triangles


def _orient_ccw(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip planar triangles with negative signed area."""
    p = points[triangles]
    signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    fixed = triangles.copy()
    flip = signed < 0
    fixed[flip] = fixed[flip][:, [0, 2, 1]]
    return fixed


def disk_mesh(rings: int = 4, sectors: int = 6, radius: float = 1.0) -> SimplicialManifold:
    """
    Concentric-ring disk: ring k sits at radius k/rings and holds sectors*k
    vertices. rings=1, sectors=6 is the hexagonal fan.
    """
    # ---- Guard clauses ----
    if rings < MIN_RINGS:
        raise ValueError("rings must be at least 1")
    if sectors < MIN_SECTORS:
        raise ValueError("sectors must be at least 3")
    if radius <= 0:
        raise ValueError("radius must be positive")

    coords = [(0.0, 0.0)]
    rows = [([0], [0.0])]
    for k in range(1, rings + 1):
        count = sectors * k
        angles = 2.0 * np.pi * np.arange(count) / count
        rho = radius * k / rings
        ids = list(range(len(coords), len(coords) + count))
        coords.extend(zip(rho * np.cos(angles), rho * np.sin(angles)))
        rows.append((ids + [ids[0]], list(angles) + [2.0 * np.pi]))

    triangles = []
    for (low, low_keys), (high, high_keys) in zip(rows[:-1], rows[1:]):
        triangles.extend(_stitch(low, low_keys, high, high_keys))

    points = np.array(coords)
    tris = _orient_ccw(points, np.array(triangles, dtype=np.int64))
    meta = {"kind": "disk", "rings": rings, "sectors": sectors, "radius": radius}
    return SimplicialManifold(points, tris, meta=meta)


def annulus_mesh(
    rings: int = 2,
    sectors: int = 16,
    inner_radius: float = 0.5,
    outer_radius: float = 1.0,
) -> SimplicialManifold:
    """
    Annulus on rings + 1 circles with geometrically spaced radii; alternate
    circles are rotated by half a sector.

    Triangles are acute when log(outer/inner)/rings > pi/sectors.
    """
    # ---- Guard clauses ----
    if rings < MIN_RINGS:
        raise ValueError("rings must be at least 1")
    if sectors < MIN_SECTORS:
        raise ValueError("sectors must be at least 3")
    if not 0 < inner_radius < outer_radius:
        raise ValueError("radii must satisfy 0 < inner_radius < outer_radius")

    step = np.log(outer_radius / inner_radius) / rings
    if step <= np.pi / sectors:
        logger.warning(
            "annulus with rings=%d, sectors=%d has obtuse triangles", rings, sectors
        )

    coords = []
    circles = []
    for j in range(rings + 1):
        rho = inner_radius * np.exp(j * step)
        angles = 2.0 * np.pi * np.arange(sectors) / sectors + (j % 2) * np.pi / sectors
        circles.append(list(range(len(coords), len(coords) + sectors)))
        coords.extend(zip(rho * np.cos(angles), rho * np.sin(angles)))

    triangles = []
    for j in range(rings):
        low, high = circles[j], circles[j + 1]
        for i in range(sectors):
            nxt = (i + 1) % sectors
            if j % 2 == 0:
                triangles += [(low[i], low[nxt], high[i]), (low[nxt], high[nxt], high[i])]
            else:
                triangles += [(low[i], high[nxt], high[i]), (low[i], low[nxt], high[nxt])]

    points = np.array(coords)
    tris = _orient_ccw(points, np.array(triangles, dtype=np.int64))
    meta = {
        "kind": "annulus",
        "rings": rings,
        "sectors": sectors,
        "inner_radius": inner_radius,
        "outer_radius": outer_radius,
    }
    return SimplicialManifold(points, tris, meta=meta)


def rectangle_mesh(
    nx: int = 8, ny: int = 8, width: float = 1.0, height: float = 1.0
) -> SimplicialManifold:
    """Shifted-row lattice on [0, width] x [0, height]; odd rows gain end points."""
    # ---- Guard clauses ----
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")

    spacing = width / nx
    coords = []
    rows = []
    for j in range(ny + 1):
        if j % 2 == 0:
            xs = spacing * np.arange(nx + 1)
        else:
            xs = np.concatenate([[0.0], spacing * (np.arange(nx) + 0.5), [width]])
        ids = list(range(len(coords), len(coords) + len(xs)))
        coords.extend((x, j * height / ny) for x in xs)
        rows.append((ids, list(xs)))

    triangles = []
    for (low, low_keys), (high, high_keys) in zip(rows[:-1], rows[1:]):
        triangles.extend(_stitch(low, low_keys, high, high_keys))

    points = np.array(coords)
    tris = _orient_ccw(points, np.array(triangles, dtype=np.int64))
    meta = {"kind": "rectangle", "nx": nx, "ny": ny, "width": width, "height": height}
    return SimplicialManifold(points, tris, meta=meta)


def torus_mesh(
    nx: int = 16, ny: int = 16, width: float = 1.0, height: float = 1.0
) -> SimplicialManifold:
    """
    Flat torus [0, width) x [0, height) as a periodic shifted-row lattice.

    Odd rows are shifted by half a spacing, so ny must be even.
    """
    # ---- Guard clauses ----
    if nx < 3:
        raise ValueError("nx must be at least 3")
    if ny < 4 or ny % 2:
        raise ValueError("ny must be even and at least 4")
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")

    dx, dy = width / nx, height / ny
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    xs = (ii + 0.5 * (jj % 2)) * dx
    ys = jj * dy
    points = np.stack([xs.ravel(), ys.ravel()], axis=1)

    def idx(i: int, j: int) -> int:
        return (j % ny) * nx + (i % nx)

    triangles = []
    for j in range(ny):
        for i in range(nx):
            if j % 2 == 0:
                triangles += [
                    (idx(i, j), idx(i + 1, j), idx(i, j + 1)),
                    (idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)),
                ]
            else:
                triangles += [
                    (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)),
                    (idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)),
                ]

    meta = {"kind": "torus", "nx": nx, "ny": ny, "width": width, "height": height}
    return SimplicialManifold(points, triangles, period=(width, height), meta=meta)


_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = [
    (-1, _GOLDEN, 0), (1, _GOLDEN, 0), (-1, -_GOLDEN, 0), (1, -_GOLDEN, 0),
    (0, -1, _GOLDEN), (0, 1, _GOLDEN), (0, -1, -_GOLDEN), (0, 1, -_GOLDEN),
    (_GOLDEN, 0, -1), (_GOLDEN, 0, 1), (-_GOLDEN, 0, -1), (-_GOLDEN, 0, 1),
]  # fmt: skip
_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]  # fmt: skip


def sphere_mesh(subdiv: int = 2, radius: float = 1.0) -> SimplicialManifold:
    """Icosphere: the icosahedron refined `subdiv` times and projected outward."""
    # ---- Guard clauses ----
    if subdiv < 0:
        raise ValueError("subdiv must be non-negative")
    if radius <= 0:
        raise ValueError("radius must be positive")

    points = [np.array(v, dtype=float) for v in _ICOSAHEDRON_VERTICES]
    faces = list(_ICOSAHEDRON_FACES)
    for _ in range(subdiv):
        midpoints: Dict[Tuple[int, int], int] = {}

        def middle(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                midpoints[key] = len(points)
                points.append(0.5 * (points[a] + points[b]))
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined

    coords = np.array(points)
    coords = radius * coords / np.linalg.norm(coords, axis=1, keepdims=True)
    tris = np.array(faces, dtype=np.int64)
    p = coords[tris]
    outward = np.einsum(
        "ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p.mean(axis=1)
    )
    tris[outward < 0] = tris[outward < 0][:, [0, 2, 1]]
    meta = {"kind": "sphere", "subdiv": subdiv, "radius": radius}
    return SimplicialManifold(coords, tris, meta=meta)


_GENERATORS = {
    "disk": disk_mesh,
    "annulus": annulus_mesh,
    "rectangle": rectangle_mesh,
    "torus": torus_mesh,
    "sphere": sphere_mesh,
}


def generate_mesh(kind: str, **params) -> SimplicialManifold:
    """
    Build one of the test geometries.

    Args:
        kind: One of MESH_KINDS.
        **params: Resolution and size parameters of the chosen generator.

    Returns:
        A validated SimplicialManifold.

    Raises:
        ValueError: For unknown kinds or degenerate parameters.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"Unknown mesh kind: {kind}")
    try:
        mesh = _GENERATORS[kind](**params)
    except TypeError as exc:
        raise ValueError(f"Invalid parameters for {kind} mesh: {exc}") from exc
    logger.debug(
        "Generated %s mesh: V=%d E=%d F=%d (%s dual)",
        kind,
        mesh.n_vertices,
        mesh.n_edges,
        mesh.n_triangles,
        mesh.dual_kind,
    )
    return mesh


# ----------------------------------------------------------------------
# OFF files
# ----------------------------------------------------------------------


def _directed_edges(tri: Sequence[int]) -> List[Tuple[int, int]]:
    return [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]


def _orient_consistently(faces: List[List[int]]) -> List[List[int]]:
    """Flip faces breadth-first so shared edges are traversed oppositely."""
    adjacency: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for t, tri in enumerate(faces):
        for a, b in _directed_edges(tri):
            adjacency[(min(a, b), max(a, b))].append(t)

    for key, owners in adjacency.items():
        if len(owners) > 2:
            raise ValueError(f"non-manifold edge {key} bounds {len(owners)} triangles")

    faces = [list(tri) for tri in faces]
    visited = [False] * len(faces)
    for seed in range(len(faces)):
        if visited[seed]:
            continue
        visited[seed] = True
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for a, b in _directed_edges(faces[t]):
                for s in adjacency[(min(a, b), max(a, b))]:
                    if s == t:
                        continue
                    same = (a, b) in _directed_edges(faces[s])
                    if not visited[s]:
                        if same:
                            faces[s] = [faces[s][0], faces[s][2], faces[s][1]]
                        visited[s] = True
                        queue.append(s)
                    elif same:
                        raise ValueError(
                            "inconsistent orientation not repairable by flipping"
                        )
    return faces


def load_off(
    text: str, period: Optional[Tuple[float, float]] = None
) -> SimplicialManifold:
    """
    Parse an ASCII OFF triangle mesh.

    Args:
        text: File content ("OFF", "V F 0", vertex lines, "3 i j k" lines).
        period: Optional torus period for meshes exported from a flat torus.

    Returns:
        A validated, consistently oriented SimplicialManifold.

    Raises:
        ValueError: On malformed content, non-manifold edges or non-orientable input.
    """
    lines = [line.split("#")[0].strip() for line in text.splitlines()]
    lines = [line for line in lines if line]

    # ---- Guard clauses ----
    if not lines or lines[0] != "OFF":
        raise ValueError("missing OFF header")
    if len(lines) < 2:
        raise ValueError("missing OFF counts line")

    try:
        counts = lines[1].split()
        n_verts, n_faces = int(counts[0]), int(counts[1])
    except (IndexError, ValueError) as exc:
        raise ValueError("malformed OFF counts line") from exc
    if len(lines) != 2 + n_verts + n_faces:
        raise ValueError(
            f"vertex/face count mismatch: header declares {n_verts} + {n_faces} "
            f"records, file has {len(lines) - 2}"
        )

    try:
        vertices = []
        for line in lines[2 : 2 + n_verts]:
            values = [float(v) for v in line.split()]
            if len(values) != 3:
                raise ValueError(f"vertex line needs 3 coordinates: {line!r}")
            vertices.append(values)
        faces = []
        for line in lines[2 + n_verts :]:
            values = [int(v) for v in line.split()]
            if len(values) != 4 or values[0] != 3:
                raise ValueError(f"only triangular faces are supported: {line!r}")
            faces.append(values[1:])
    except ValueError as exc:
        logger.exception("Malformed OFF record")
        raise ValueError(f"malformed OFF record: {exc}") from exc

    triangles = _orient_consistently(faces)
    return SimplicialManifold(
        vertices, triangles, period=period, meta={"kind": "off"}
    )


def to_off(mesh: SimplicialManifold) -> str:
    """Serialize a mesh as ASCII OFF."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} 0"]
    lines += [" ".join(f"{c:.17g}" for c in v) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Boundary distance and strips
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class StripCutoff:
    """Smooth cutoff psi_r: 1 within r/2 of the boundary, 0 beyond 3r/4."""

    r: float
    psi: np.ndarray
    grad_bound: float
    distance: np.ndarray


def _edge_graph(mesh: SimplicialManifold) -> sparse.csr_matrix:
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_vertices
    return sparse.coo_matrix((mesh.edge_lengths, (a, b)), shape=(n, n)).tocsr()


def nearest_boundary(mesh: SimplicialManifold) -> Tuple[np.ndarray, np.ndarray]:
    """
    Graph-geodesic distance to the boundary and the closest boundary vertex.

    Returns:
        (distances, source vertex per vertex); (+inf, -1) without boundary.
    """
    n = mesh.n_vertices
    if not mesh.has_boundary:
        return np.full(n, np.inf), np.full(n, -1, dtype=np.int64)
    dist, _, sources = dijkstra(
        _edge_graph(mesh),
        directed=False,
        indices=mesh.boundary_vertices,
        min_only=True,
        return_predecessors=True,
    )
    return dist, sources.astype(np.int64)


def distance_to_boundary(mesh: SimplicialManifold) -> np.ndarray:
    """Per-vertex Dijkstra distance to the boundary; all +inf when there is none."""
    return nearest_boundary(mesh)[0]


def cutoff_profile(dist: np.ndarray, r: float) -> np.ndarray:
    """Quintic smooth step: 1 on [0, r/2], 0 on [3r/4, inf)."""
    x = np.clip((np.asarray(dist, dtype=float) - 0.5 * r) / (0.25 * r), 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def strip_cutoff(mesh: SimplicialManifold, r: float) -> StripCutoff:
    """
    Build the strip cutoff psi_r on vertices.

    grad_bound is the largest edge-wise slope of psi, at most 7.5 / r because
    the graph distance is 1-Lipschitz along edges.

    Raises:
        ValueError: Without boundary, or unless 0 < r < max boundary distance.
    """
    # ---- Guard clauses ----
    if not mesh.has_boundary:
        raise ValueError("strip cutoff needs a mesh with boundary")
    dist = distance_to_boundary(mesh)
    reach = float(dist.max())
    if not 0 < r < reach:
        raise ValueError(f"r must lie in (0, {reach:.6g}) for this mesh, got {r}")

    psi = cutoff_profile(dist, r)
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    grad_bound = float(np.max(np.abs(psi[a] - psi[b]) / mesh.edge_lengths))
    if grad_bound * r > CUTOFF_CONSTANT:
        logger.warning("cutoff slope %.3g exceeds %g / r", grad_bound, CUTOFF_CONSTANT)
    psi.flags.writeable = False
    return StripCutoff(r=float(r), psi=psi, grad_bound=grad_bound, distance=dist)


def strip_fractions(mesh: SimplicialManifold, dist: np.ndarray, r: float) -> np.ndarray:
    """
    Fraction of each triangle where the linear interpolant of dist is below r.
    """
    d = np.sort(np.asarray(dist)[mesh.triangles], axis=1)
    a, b, c = d[:, 0], d[:, 1], d[:, 2]
    frac = np.where(r >= c, 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        low = (r - a) ** 2 / ((b - a) * (c - a))
        high = 1.0 - (c - r) ** 2 / ((c - a) * (c - b))
    frac = np.where((a < r) & (r <= b), low, frac)
    frac = np.where((b < r) & (r < c), high, frac)
    return frac


def strip_area(mesh: SimplicialManifold, dist: np.ndarray, r: float) -> float:
    """|M_{<r}| by exact clipping of the piecewise-linear distance."""
    return float(np.dot(mesh.areas, strip_fractions(mesh, dist, r)))
