"""
L^p and first-order Sobolev norms of cochains, coarea strip reports and the
tangential/normal strip truncation.

Design principles:
- 1-forms are measured through their Whitney fields at barycenters
- 0-forms use dual-cell weights, 2-forms their per-triangle densities
- Pure functions; reports are NormReport models
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models import NormReport
from .dec import Cochain, OperatorBundle, whitney_flat, whitney_sharp
from .mesh import (
    SimplicialManifold,
    StripCutoff,
    nearest_boundary,
    perimeter,
    strip_fractions,
)

logger = logging.getLogger(__name__)

CochainLike = Union[Cochain, np.ndarray]


def _weighted_p_norm(weights: np.ndarray, magnitudes: np.ndarray, p: float) -> float:
    if magnitudes.size == 0:
        return 0.0
    if np.isinf(p):
        return float(np.max(magnitudes))
    return float(np.sum(weights * magnitudes**p) ** (1.0 / p))


def lp_norm(
    bundle: OperatorBundle, omega: CochainLike, p: float, degree: Optional[int] = None
) -> NormReport:
    """
    L^p norm of a 0-, 1- or 2-cochain.

    Args:
        bundle: Operators of the mesh.
        omega: Cochain, or raw values together with degree.
        p: Exponent in [1, inf].
        degree: Needed when omega is a raw array.

    Raises:
        ValueError: If p < 1 or the degree cannot be determined.
    """
    # ---- Guard clauses ----
    if not p >= 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if isinstance(omega, Cochain):
        degree, values = omega.degree, omega.values
    else:
        if degree is None:
            raise ValueError("degree is required for raw cochain values")
        values = np.asarray(omega, dtype=float)

    mesh = bundle.mesh
    if degree == 0:
        value = _weighted_p_norm(mesh.star0, np.abs(values), p)
        method = "mass"
    elif degree == 1:
        magnitudes = np.linalg.norm(whitney_sharp(bundle, values), axis=1)
        value = _weighted_p_norm(mesh.areas, magnitudes, p)
        method = "quadrature"
    elif degree == 2:
        value = _weighted_p_norm(mesh.areas, np.abs(values) / mesh.areas, p)
        method = "mass"
    else:
        raise ValueError(f"degree must be 0, 1 or 2, got {degree}")
    return NormReport(value=value, p=p, method=method)


def w1p_norm(bundle: OperatorBundle, omega: CochainLike, p: float) -> NormReport:
    """|omega|_p + |d omega|_p + |delta_c omega|_p for an absolute 1-cochain."""
    values = omega.values if isinstance(omega, Cochain) else np.asarray(omega, dtype=float)
    base = lp_norm(bundle, values, p, degree=1).value
    curl = lp_norm(bundle, bundle.exterior(1, values), p, degree=2).value
    div = lp_norm(bundle, bundle.codifferential(1, values), p, degree=0).value
    return NormReport(
        value=base + curl + div,
        p=p,
        m=1,
        method="quadrature",
        components={"lp": base, "d": curl, "delta": div},
    )


# ----------------------------------------------------------------------
# Coarea strips
# ----------------------------------------------------------------------


def coarea_report(
    mesh: SimplicialManifold,
    f: np.ndarray,
    p: float,
    r_list: Sequence[float],
    dist: Optional[np.ndarray] = None,
) -> List[Dict[str, float]]:
    """
    Strip-averaged L^p norms of a vertex function next to its boundary average.

    Triangles are weighted by the exact fraction of their area with distance
    below r; f is evaluated at barycenters, the trace by Simpson's rule.

    Returns:
        Rows with r, strip_norm, boundary_norm and area_ratio = |M_<r| / (|dM| r).

    Raises:
        ValueError: Without boundary, or when a strip is empty.
    """
    # ---- Guard clauses ----
    if not mesh.has_boundary:
        raise ValueError("coarea report needs a mesh with boundary")
    if not p >= 1:
        raise ValueError(f"p must be at least 1, got {p}")

    f = np.asarray(f, dtype=float)
    if dist is None:
        dist = nearest_boundary(mesh)[0]
    f_tri = np.abs(f[mesh.triangles].mean(axis=1))

    edges = mesh.boundary_edges
    a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
    length = perimeter(mesh)
    if np.isinf(p):
        boundary_norm = float(np.max(np.abs(f[mesh.boundary_vertices])))
    else:
        mid = 0.5 * (np.abs(f[a]) + np.abs(f[b]))
        trace = (np.abs(f[a]) ** p + 4.0 * mid**p + np.abs(f[b]) ** p) / 6.0
        boundary_norm = float((np.sum(mesh.edge_lengths[edges] * trace) / length) ** (1.0 / p))

    rows = []
    for r in r_list:
        weights = mesh.areas * strip_fractions(mesh, dist, r)
        area = float(weights.sum())
        if area <= 0:
            raise ValueError(f"strip of width {r} contains no area")
        if np.isinf(p):
            strip_norm = float(np.max(f_tri[weights > 0]))
        else:
            strip_norm = float((np.sum(weights * f_tri**p) / area) ** (1.0 / p))
        rows.append(
            {
                "r": float(r),
                "strip_norm": strip_norm,
                "boundary_norm": boundary_norm,
                "area_ratio": area / (length * r),
            }
        )
    return rows


# ----------------------------------------------------------------------
# Strip truncation
# ----------------------------------------------------------------------


def boundary_vertex_normals(mesh: SimplicialManifold) -> np.ndarray:
    """Unit outward normals at boundary vertices (mean of adjacent edge normals)."""
    normals = np.zeros((mesh.n_vertices, 3))
    for column in (0, 1):
        np.add.at(normals, mesh.edges[mesh.boundary_edges, column], mesh.boundary_normals)
    lengths = np.linalg.norm(normals, axis=1)
    mask = lengths > 0
    normals[mask] /= lengths[mask, None]
    return normals


def extended_normals(mesh: SimplicialManifold, dist: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """
    Per-triangle normal field nu~: the normal at the boundary vertex nearest to
    the triangle's closest vertex.
    """
    vertex_normals = boundary_vertex_normals(mesh)
    local = np.argmin(dist[mesh.triangles], axis=1)
    closest = mesh.triangles[np.arange(mesh.n_triangles), local]
    return vertex_normals[sources[closest]]


def strip_truncate(
    bundle: OperatorBundle, cutoff: StripCutoff, X: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split a 1-cochain into t_r X + n_r X with n_r X = flat(psi <u, nu~> nu~).

    Returns:
        (t_r X, n_r X); their sum is X exactly.

    Raises:
        ValueError: Without boundary.
    """
    mesh = bundle.mesh
    # ---- Guard clauses ----
    if not mesh.has_boundary:
        raise ValueError("strip truncation needs a mesh with boundary")

    X = np.asarray(X, dtype=float)
    dist, sources = nearest_boundary(mesh)
    nu = extended_normals(mesh, dist, sources)
    psi_tri = cutoff.psi[mesh.triangles].mean(axis=1)
    field = whitney_sharp(bundle, X)
    normal_part = (psi_tri * np.einsum("ij,ij->i", field, nu))[:, None] * nu
    n_r = whitney_flat(bundle, normal_part)
    return X - n_r, n_r
