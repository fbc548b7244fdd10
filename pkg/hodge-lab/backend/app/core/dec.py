"""
Discrete exterior calculus on triangle meshes.

Assembles the signed incidence matrices d0, d1, the diagonal Hodge stars, the
codifferentials of the absolute complex (all simplices) and of the relative
complex (interior simplices only), and the lowest-order Whitney maps between
1-cochains and per-triangle vector fields.

Design principles:
- delta_c := star^-1 d^T star, so adjointness is exact rather than approximate
- The relative complex restricts d to interior simplices; restriction is also
  the mass projection onto it (stars are diagonal)
- Pure functions over an immutable OperatorBundle
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
from scipy import sparse

from .mesh import SimplicialManifold

logger = logging.getLogger(__name__)

ABSOLUTE = "absolute"
RELATIVE = "relative"
COMPLEXES = (ABSOLUTE, RELATIVE)
DEGREES = (0, 1, 2)


@dataclass(frozen=True)
class Cochain:
    """Degree- and complex-tagged real values on k-simplices."""

    degree: int
    values: np.ndarray
    complex: str = ABSOLUTE

    def __post_init__(self):
        if self.degree not in DEGREES:
            raise ValueError(f"degree must be 0, 1 or 2, got {self.degree}")
        if self.complex not in COMPLEXES:
            raise ValueError(f"complex must be one of {COMPLEXES}, got {self.complex}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("cochain values must be one-dimensional")
        object.__setattr__(self, "values", values)

    def _check_compatible(self, other: "Cochain") -> None:
        if not isinstance(other, Cochain):
            raise TypeError("cochain arithmetic needs another Cochain")
        if (self.degree, self.complex) != (other.degree, other.complex):
            raise ValueError(
                f"mismatched cochains: degree {self.degree}/{self.complex} "
                f"vs {other.degree}/{other.complex}"
            )
        if self.values.shape != other.values.shape:
            raise ValueError("cochains live on different simplex counts")

    def __add__(self, other: "Cochain") -> "Cochain":
        self._check_compatible(other)
        return Cochain(self.degree, self.values + other.values, self.complex)

    def __sub__(self, other: "Cochain") -> "Cochain":
        self._check_compatible(other)
        return Cochain(self.degree, self.values - other.values, self.complex)

    def __neg__(self) -> "Cochain":
        return Cochain(self.degree, -self.values, self.complex)

    def __mul__(self, scalar: float) -> "Cochain":
        return Cochain(self.degree, float(scalar) * self.values, self.complex)

    __rmul__ = __mul__


def _diag(values: np.ndarray) -> sparse.dia_matrix:
    return sparse.diags(np.asarray(values, dtype=float))


class OperatorBundle:
    """d, stars and codifferentials of the absolute and relative complexes."""

    def __init__(self, mesh: SimplicialManifold):
        self.mesh = mesh
        n_verts, n_edges, n_tris = mesh.n_vertices, mesh.n_edges, mesh.n_triangles

        # ---- Guard clauses ----
        for k, stars, kind in (
            (0, mesh.star0, "vertex"),
            (1, mesh.star1, "edge"),
            (2, mesh.star2, "triangle"),
        ):
            bad = np.flatnonzero(~(stars > 0))
            if bad.size:
                raise ValueError(
                    f"non-positive dual measure on {kind} {int(bad[0])} (degree {k})"
                )

        rows = np.arange(n_edges)
        d0 = sparse.csr_matrix(
            (
                np.concatenate([-np.ones(n_edges), np.ones(n_edges)]),
                (np.concatenate([rows, rows]), np.concatenate(mesh.edges.T)),
            ),
            shape=(n_edges, n_verts),
        )
        d1 = sparse.csr_matrix(
            (
                mesh.tri_edge_signs.ravel().astype(float),
                (np.repeat(np.arange(n_tris), 3), mesh.tri_edges.ravel()),
            ),
            shape=(n_tris, n_edges),
        )

        self.d: Dict[int, sparse.csr_matrix] = {0: d0, 1: d1}
        self.star: Dict[int, np.ndarray] = {0: mesh.star0, 1: mesh.star1, 2: mesh.star2}
        self.interior: Dict[int, np.ndarray] = {
            0: mesh.interior_vertices,
            1: mesh.interior_edges,
            2: np.arange(n_tris),
        }
        self.d_rel: Dict[int, sparse.csr_matrix] = {
            0: d0[self.interior[1]][:, self.interior[0]].tocsr(),
            1: d1[:, self.interior[1]].tocsr(),
        }
        self.codif: Dict[str, Dict[int, sparse.csr_matrix]] = {
            ABSOLUTE: {
                k: (
                    _diag(1.0 / self.star[k - 1]) @ self.d[k - 1].T @ _diag(self.star[k])
                ).tocsr()
                for k in (1, 2)
            },
            RELATIVE: {
                k: (
                    _diag(1.0 / self.masses(k - 1, RELATIVE))
                    @ self.d_rel[k - 1].T
                    @ _diag(self.masses(k, RELATIVE))
                ).tocsr()
                for k in (1, 2)
            },
        }

    # ---- sizes and masses ----

    def size(self, k: int, complex: str = ABSOLUTE) -> int:
        if complex == RELATIVE:
            return len(self.interior[k])
        return len(self.star[k])

    def masses(self, k: int, complex: str = ABSOLUTE) -> np.ndarray:
        if complex == RELATIVE:
            return self.star[k][self.interior[k]]
        return self.star[k]

    def restrict(self, k: int, values: np.ndarray) -> np.ndarray:
        """Mass projection of an absolute k-cochain onto the relative subspace."""
        return np.asarray(values, dtype=float)[self.interior[k]]

    def extend(self, k: int, values: np.ndarray) -> np.ndarray:
        """Zero-extension of a relative k-cochain to all simplices."""
        full = np.zeros(self.size(k))
        full[self.interior[k]] = values
        return full

    # ---- operators on raw arrays ----

    def exterior(self, k: int, values: np.ndarray, complex: str = ABSOLUTE) -> np.ndarray:
        matrix = self.d_rel[k] if complex == RELATIVE else self.d[k]
        return matrix @ values

    def codifferential(
        self, k: int, values: np.ndarray, complex: str = ABSOLUTE
    ) -> np.ndarray:
        return self.codif[complex][k] @ values

    def inner(
        self, k: int, a: np.ndarray, b: np.ndarray, complex: str = ABSOLUTE
    ) -> float:
        return float(np.sum(self.masses(k, complex) * a * b))

    def norm(self, k: int, values: np.ndarray, complex: str = ABSOLUTE) -> float:
        return float(np.sqrt(max(self.inner(k, values, values, complex), 0.0)))

    def cochain(self, k: int, values: np.ndarray, complex: str = ABSOLUTE) -> Cochain:
        """Wrap values as a Cochain after checking the simplex count."""
        cochain = Cochain(k, values, complex)
        if cochain.values.shape != (self.size(k, complex),):
            raise ValueError(
                f"{complex} {k}-cochain needs {self.size(k, complex)} values, "
                f"got {cochain.values.shape[0]}"
            )
        return cochain


def build_operators(mesh: SimplicialManifold) -> OperatorBundle:
    """
    Assemble the operator bundle of a mesh.

    Raises:
        ValueError: If a dual measure is not positive.
        RuntimeError: If sparse assembly fails unexpectedly.
    """
    try:
        bundle = OperatorBundle(mesh)
    except ValueError:
        raise
    except Exception as exc:
        logger.exception("Operator assembly failed")
        raise RuntimeError("Operator assembly failed") from exc
    logger.debug("Assembled operators on %d edges", mesh.n_edges)
    return bundle


def inner_product(bundle: OperatorBundle, a: Cochain, b: Cochain) -> float:
    """
    Mass inner product <<a, b>> = sum(star * a * b).

    Raises:
        ValueError: For cochains of different degree or complex.
    """
    a._check_compatible(b)
    bundle.cochain(a.degree, a.values, a.complex)
    return bundle.inner(a.degree, a.values, b.values, a.complex)


# ----------------------------------------------------------------------
# Whitney maps
# ----------------------------------------------------------------------


def barycentric_gradients(mesh: SimplicialManifold) -> np.ndarray:
    """grad(lambda_i) per triangle corner, shape (F, 3, 3)."""
    grads = np.empty((mesh.n_triangles, 3, 3))
    for i in range(3):
        opposite = mesh.corners[:, (i + 2) % 3] - mesh.corners[:, (i + 1) % 3]
        grads[:, i] = np.cross(mesh.normals, opposite) / (2.0 * mesh.areas[:, None])
    return grads


def whitney_sharp(bundle: OperatorBundle, omega: np.ndarray) -> np.ndarray:
    """
    Evaluate the Whitney field of a 1-cochain at triangle barycenters.

    At the barycenter the edge function of (a -> b) equals
    (grad lambda_b - grad lambda_a) / 3.

    Returns:
        (F, 3) array of vectors.
    """
    mesh = bundle.mesh
    omega = np.asarray(omega, dtype=float)
    grads = barycentric_gradients(mesh)
    field = np.zeros((mesh.n_triangles, 3))
    for j in range(3):
        value = omega[mesh.tri_edges[:, j]] * mesh.tri_edge_signs[:, j]
        field += value[:, None] * (grads[:, (j + 1) % 3] - grads[:, j]) / 3.0
    return field


def whitney_gradient(bundle: OperatorBundle, omega: np.ndarray) -> np.ndarray:
    """
    Per-triangle gradient of the Whitney field, G[t, i, j] = d_j u_i.

    Lowest-order edge elements have antisymmetric gradients; exact forms give 0.
    """
    mesh = bundle.mesh
    omega = np.asarray(omega, dtype=float)
    grads = barycentric_gradients(mesh)
    gradient = np.zeros((mesh.n_triangles, 3, 3))
    for j in range(3):
        value = omega[mesh.tri_edges[:, j]] * mesh.tri_edge_signs[:, j]
        ga, gb = grads[:, j], grads[:, (j + 1) % 3]
        gradient += value[:, None, None] * (
            np.einsum("ti,tj->tij", gb, ga) - np.einsum("ti,tj->tij", ga, gb)
        )
    return gradient


def whitney_flat(bundle: OperatorBundle, field: np.ndarray) -> np.ndarray:
    """
    Edge values of a per-triangle vector field.

    Each edge gets the mean of (u_T . edge vector) over its triangles; boundary
    edges use their single triangle.
    """
    mesh = bundle.mesh
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_triangles, 3):
        raise ValueError(f"field must have shape ({mesh.n_triangles}, 3)")
    total = np.zeros(mesh.n_edges)
    for j in range(3):
        edges = mesh.tri_edges[:, j]
        total += np.bincount(
            edges,
            weights=np.einsum("ij,ij->i", field, mesh.edge_vectors[edges]),
            minlength=mesh.n_edges,
        )
    count = (mesh.edge_tris >= 0).sum(axis=1)
    return total / count


def flat_field(
    mesh: SimplicialManifold, func: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """
    Midpoint-rule line integrals of a closed-form field.

    Args:
        mesh: Mesh whose edges are integrated over.
        func: Maps (n, 3) points to (n, 2) or (n, 3) vectors.

    Returns:
        1-cochain, exact for affine fields.
    """
    vectors = np.asarray(func(mesh.edge_midpoints), dtype=float)
    if vectors.shape[1] == 2:
        vectors = np.hstack([vectors, np.zeros((len(vectors), 1))])
    return np.einsum("ij,ij->i", vectors, mesh.edge_vectors)


def normal_flux(bundle: OperatorBundle, field: np.ndarray) -> np.ndarray:
    """<nu, u_T> on every boundary edge for a per-triangle field."""
    mesh = bundle.mesh
    tris = mesh.edge_tris[mesh.boundary_edges, 0]
    return np.einsum("ij,ij->i", np.asarray(field)[tris], mesh.boundary_normals)


def loop_integral(bundle: OperatorBundle, omega: np.ndarray, cycle: Sequence[int]) -> float:
    """Sum of a 1-cochain along a closed vertex cycle."""
    total = 0.0
    for a, b in zip(cycle, list(cycle[1:]) + [cycle[0]]):
        edge, sign = bundle.mesh.edge_index(int(a), int(b))
        total += sign * omega[edge]
    return float(total)


def by_parts_defect(
    bundle: OperatorBundle,
    f: np.ndarray,
    field: Callable[[np.ndarray], np.ndarray],
) -> float:
    """
    Integration-by-parts mismatch for a 0-form f and a smooth field X.

    |<<df, eta>> - <<f, delta eta>>_interior - int_dM f <nu, X>| with
    eta = flat(X) and the relative codifferential on interior vertices.
    Simpson's rule on boundary edges.
    """
    mesh = bundle.mesh
    f = np.asarray(f, dtype=float)
    eta = flat_field(mesh, field)
    lhs = bundle.inner(1, bundle.exterior(0, f), eta)
    div_interior = bundle.codifferential(1, bundle.restrict(1, eta), RELATIVE)
    volume = bundle.inner(0, bundle.restrict(0, f), div_interior, RELATIVE)

    boundary = 0.0
    if mesh.has_boundary:
        edges = mesh.boundary_edges
        a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
        nu = mesh.boundary_normals

        def flux(points: np.ndarray) -> np.ndarray:
            values = np.asarray(field(points), dtype=float)
            if values.shape[1] == 2:
                values = np.hstack([values, np.zeros((len(values), 1))])
            return np.einsum("ij,ij->i", values, nu)

        g_a = f[a] * flux(mesh.vertices[a])
        g_b = f[b] * flux(mesh.vertices[b])
        g_m = 0.5 * (f[a] + f[b]) * flux(mesh.edge_midpoints[edges])
        boundary = float(np.sum(mesh.edge_lengths[edges] * (g_a + 4.0 * g_m + g_b) / 6.0))
    return abs(lhs - volume - boundary)


def simplicial_betti(bundle: OperatorBundle, complex: str = ABSOLUTE) -> Tuple[int, int, int]:
    """Betti numbers from dense matrix ranks (homology oracle for small meshes)."""
    matrices = bundle.d_rel if complex == RELATIVE else bundle.d
    rank0 = np.linalg.matrix_rank(matrices[0].toarray()) if matrices[0].shape[1] else 0
    rank1 = np.linalg.matrix_rank(matrices[1].toarray())
    return (
        int(bundle.size(0, complex) - rank0),
        int(bundle.size(1, complex) - rank0 - rank1),
        int(bundle.size(2, complex) - rank1),
    )
