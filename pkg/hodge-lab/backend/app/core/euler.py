"""
Incompressible Euler ingredients on 1-cochains.

Provides:
- Exact steady flows (rotations and the r^2 vortex on disks, Taylor-Green on the torus)
- The nonlinear term div(U (x) V) as a Riesz 1-cochain (HeatableRep)
- The commutator W(s), its defect N(sigma), the vanishing profile A(t, s)
- The energy ledger, a Leray-projected RK4 stepper and weak-form residuals

Design principles:
- Vector fields are reconstructed at vertices as affine fields fitted by
  least squares to the 2-ring line integrals (exact for affine fields)
- The nonlinear term is the Riesz representative of its weak form
  -int (U (x) V) : grad RX + int_dM <nu, U> <V, RX>, tested against the
  reconstruction RX of every 1-cochain X and solved with the diagonal star_1
- Time integrals use scipy's trapezoid rule on uniform grids
"""

import functools
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, sparse

from ..models import LedgerRow
from .dec import Cochain, OperatorBundle, barycentric_gradients, flat_field, whitney_sharp
from .heat import SpectralCache, heat_apply, laplace_apply
from .hodge import leray_project, pressure_recover
from .mesh import SimplicialManifold, mesh_size
from .norms import w1p_norm

if TYPE_CHECKING:
    from .trace import FlowTrace

logger = logging.getLogger(__name__)

CFL_NUMBER = 0.5
# int_{-1}^{1} (1 - x^2)^4 dx = 256/315; with x = 2(t - t0)/T the bump has unit mass.
BUMP_MASS = 128.0 / 315.0
TEST_CLASSES = ("interior", "tangential", "leray")
PERIOD_TOLERANCE = 1e-9


@dataclass(frozen=True)
class HeatableRep:
    """Riesz 1-cochain standing in for a heatable current, tagged with its formula."""

    cochain: Cochain
    provenance: str

    @property
    def values(self) -> np.ndarray:
        return self.cochain.values


# ----------------------------------------------------------------------
# Exact flows
# ----------------------------------------------------------------------


def rotational_flow(
    mesh: SimplicialManifold, profile: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """
    Flat of f(r) e_theta on a planar mesh centred at the origin.

    Raises:
        ValueError: On non-planar or boundaryless meshes, or where f is undefined.
    """
    # ---- Guard clauses ----
    if not mesh.is_planar or not mesh.has_boundary or mesh.period is not None:
        raise ValueError("rotational_flow needs a planar disk or annulus")

    def field(points: np.ndarray) -> np.ndarray:
        x, y = points[:, 0], points[:, 1]
        radius = np.hypot(x, y)
        speed = np.asarray(profile(radius), dtype=float) * np.ones_like(radius)
        if not np.all(np.isfinite(speed)):
            raise ValueError("velocity profile is undefined at a sampled radius")
        scale = np.divide(speed, radius, out=np.zeros_like(radius), where=radius > 0)
        return np.stack([-scale * y, scale * x], axis=1)

    return flat_field(mesh, field)


def rigid_rotation(mesh: SimplicialManifold) -> np.ndarray:
    return rotational_flow(mesh, lambda r: r)


def _require_two_pi_torus(mesh: SimplicialManifold) -> None:
    period = mesh.period
    if period is None or not np.allclose(period, 2.0 * np.pi, rtol=PERIOD_TOLERANCE):
        raise ValueError("taylor_green needs a flat torus of period 2*pi")


def taylor_green(mesh: SimplicialManifold) -> np.ndarray:
    """Flat of (cos x sin y, -sin x cos y) on the 2*pi torus."""
    _require_two_pi_torus(mesh)
    return flat_field(
        mesh,
        lambda p: np.stack(
            [np.cos(p[:, 0]) * np.sin(p[:, 1]), -np.sin(p[:, 0]) * np.cos(p[:, 1])],
            axis=1,
        ),
    )


def rigid_pressure(mesh: SimplicialManifold) -> np.ndarray:
    """Analytic pressure r^2/2 - 1/4 of the rigid rotation on the unit disk."""
    return 0.5 * np.sum(mesh.vertices[:, :2] ** 2, axis=1) - 0.25


def taylor_green_pressure(mesh: SimplicialManifold) -> np.ndarray:
    _require_two_pi_torus(mesh)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return -(np.cos(2.0 * x) + np.cos(2.0 * y)) / 4.0


def vortex(mesh: SimplicialManifold) -> np.ndarray:
    """Flat of r^2 e_theta, steady with pressure r^4/4 + C."""
    return rotational_flow(mesh, lambda r: r**2)


def vortex_pressure(mesh: SimplicialManifold) -> np.ndarray:
    """Analytic pressure r^4/4 - 1/12 of the r^2 vortex on the unit disk."""
    return 0.25 * np.sum(mesh.vertices[:, :2] ** 2, axis=1) ** 2 - 1.0 / 12.0


def pressure_error(bundle: OperatorBundle, recovered: np.ndarray, expected: np.ndarray) -> float:
    """
    Relative star_0 error of a recovered pressure; both means are removed first.

    Raises:
        ValueError: If the expected pressure is constant.
    """
    weights = bundle.masses(0)

    def centred(values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return values - np.dot(weights, values) / weights.sum()

    reference = centred(expected)
    scale = bundle.norm(0, reference)
    if scale == 0.0:
        raise ValueError("expected pressure is constant")
    return float(bundle.norm(0, centred(recovered) - reference) / scale)


# ----------------------------------------------------------------------
# Vertex reconstruction
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class VertexReconstruction:
    """
    Sparse maps from a 1-cochain to per-vertex affine fields.

    values: (2N, E), rows 2v + i give u_i(x_v).
    gradients: (4N, E), rows 4v + 2i + j give d_j u_i at x_v.
    """

    values: sparse.csr_matrix
    gradients: sparse.csr_matrix

    def evaluate(self, omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        omega = np.asarray(omega, dtype=float)
        return (self.values @ omega).reshape(-1, 2), (self.gradients @ omega).reshape(-1, 2, 2)


def _vertex_triangles(mesh: SimplicialManifold) -> List[np.ndarray]:
    order = np.argsort(mesh.triangles.ravel(), kind="stable")
    owners = order // 3
    counts = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices)
    return np.split(owners, np.cumsum(counts)[:-1])


@functools.lru_cache(maxsize=16)
def reconstruction(bundle: OperatorBundle) -> VertexReconstruction:
    """
    Fit u(x) = a + B (x - x_v) at every vertex to the line integrals of the
    edges of its 2-ring of triangles.

    Raises:
        ValueError: For non-planar meshes or a patch too small to fit 6 unknowns.
    """
    mesh = bundle.mesh
    # ---- Guard clauses ----
    if not mesh.is_planar:
        raise ValueError("vertex reconstruction needs a planar mesh")

    vertex_tris = _vertex_triangles(mesh)
    value_rows, value_cols, value_data = [], [], []
    grad_rows, grad_cols, grad_data = [], [], []
    for v in range(mesh.n_vertices):
        ring = np.unique(mesh.triangles[vertex_tris[v]])
        patch = np.unique(np.concatenate([vertex_tris[w] for w in ring]))
        edges = np.unique(mesh.tri_edges[patch])
        tangent = mesh.edge_vectors[edges, :2]
        offset = mesh.displacement(mesh.edge_midpoints[edges] - mesh.vertices[v])[:, :2]
        design = np.column_stack(
            [
                tangent[:, 0],
                tangent[:, 1],
                tangent[:, 0] * offset[:, 0],
                tangent[:, 0] * offset[:, 1],
                tangent[:, 1] * offset[:, 0],
                tangent[:, 1] * offset[:, 1],
            ]
        )
        if np.linalg.matrix_rank(design) < 6:
            raise ValueError(f"patch around vertex {v} cannot determine an affine field")
        solve = np.linalg.pinv(design)
        for i in range(2):
            value_rows.append(np.full(len(edges), 2 * v + i))
            value_cols.append(edges)
            value_data.append(solve[i])
        for i in range(4):
            grad_rows.append(np.full(len(edges), 4 * v + i))
            grad_cols.append(edges)
            grad_data.append(solve[2 + i])

    n, e = mesh.n_vertices, mesh.n_edges
    values = sparse.csr_matrix(
        (np.concatenate(value_data), (np.concatenate(value_rows), np.concatenate(value_cols))),
        shape=(2 * n, e),
    )
    gradients = sparse.csr_matrix(
        (np.concatenate(grad_data), (np.concatenate(grad_rows), np.concatenate(grad_cols))),
        shape=(4 * n, e),
    )
    logger.info("Vertex reconstruction built for %d vertices", n)
    return VertexReconstruction(values=values, gradients=gradients)


# ----------------------------------------------------------------------
# Nonlinear term
# ----------------------------------------------------------------------


def _moments(mesh: SimplicialManifold, value_u: np.ndarray, value_v: np.ndarray) -> np.ndarray:
    """M[t, i, j] = int_T v_i u_j for P1 fields, exact (A/12 (1 + delta_cd))."""
    corners_u, corners_v = value_u[mesh.triangles], value_v[mesh.triangles]
    return (mesh.areas / 12.0)[:, None, None] * (
        np.einsum("tci,tdj->tij", corners_v, corners_u)
        + np.einsum("tci,tcj->tij", corners_v, corners_u)
    )


def _boundary_flux(
    mesh: SimplicialManifold, value_u: np.ndarray, value_v: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simpson samples of <nu, U> V at both ends and the midpoint of every boundary edge."""
    edges = mesh.boundary_edges
    a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
    nu = mesh.boundary_normals[:, :2]
    flux_a = np.einsum("ei,ei->e", nu, value_u[a])[:, None] * value_v[a]
    flux_b = np.einsum("ei,ei->e", nu, value_u[b])[:, None] * value_v[b]
    flux_m = (
        np.einsum("ei,ei->e", nu, 0.5 * (value_u[a] + value_u[b]))[:, None]
        * 0.5
        * (value_v[a] + value_v[b])
    )
    return flux_a, flux_m, flux_b


def weak_pairing(bundle: OperatorBundle, U: np.ndarray, V: np.ndarray, X: np.ndarray) -> float:
    """
    b(X) = -int (U (x) V) : grad RX + int_dM <nu, U> <V, RX>.

    (U (x) V)_ij = V_i U_j, so b(X) = <<div(U (x) V), X>> for smooth fields. The
    volume term uses the exact P1 quadrature, the boundary term Simpson's rule,
    which is exact for the cubic integrand on straight edges.
    """
    mesh = bundle.mesh
    rec = reconstruction(bundle)
    value_u, value_v, value_x = (rec.evaluate(w)[0] for w in (U, V, X))
    grads = barycentric_gradients(mesh)[:, :, :2]

    # grad_x[t, i, j] = d_j X_i on triangle t
    grad_x = np.einsum("tci,tcj->tij", value_x[mesh.triangles], grads)
    volume = -float(np.sum(_moments(mesh, value_u, value_v) * grad_x))

    boundary = 0.0
    if mesh.has_boundary:
        edges = mesh.boundary_edges
        a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
        flux_a, flux_m, flux_b = _boundary_flux(mesh, value_u, value_v)
        x_m = 0.5 * (value_x[a] + value_x[b])
        samples = (
            np.einsum("ei,ei->e", flux_a, value_x[a])
            + 4.0 * np.einsum("ei,ei->e", flux_m, x_m)
            + np.einsum("ei,ei->e", flux_b, value_x[b])
        )
        boundary = float(np.sum(mesh.edge_lengths[edges] * samples / 6.0))
    return volume + boundary


def weak_form(bundle: OperatorBundle, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Riesz 1-cochain r with <<r, X>> = weak_pairing(U, V, X) for every X."""
    mesh = bundle.mesh
    rec = reconstruction(bundle)
    value_u, value_v = rec.evaluate(U)[0], rec.evaluate(V)[0]
    grads = barycentric_gradients(mesh)[:, :, :2]

    load = np.zeros((mesh.n_vertices, 2))
    np.add.at(
        load,
        mesh.triangles,
        -np.einsum("tij,tcj->tci", _moments(mesh, value_u, value_v), grads),
    )

    if mesh.has_boundary:
        edges = mesh.boundary_edges
        a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
        weight = (mesh.edge_lengths[edges] / 6.0)[:, None]
        flux_a, flux_m, flux_b = _boundary_flux(mesh, value_u, value_v)
        np.add.at(load, a, weight * (flux_a + 2.0 * flux_m))
        np.add.at(load, b, weight * (flux_b + 2.0 * flux_m))

    return (rec.values.T @ load.ravel()) / bundle.masses(1)


def nonlinear_term(
    bundle: OperatorBundle, V: np.ndarray, U: Optional[np.ndarray] = None
) -> HeatableRep:
    """
    Riesz representative of div(U (x) V); U defaults to V.

    Raises:
        ValueError: On non-planar meshes or wrongly sized input.
        RuntimeError: If the reconstruction fails numerically.
    """
    V = np.asarray(V, dtype=float)
    U = V if U is None else np.asarray(U, dtype=float)
    for values in (U, V):
        bundle.cochain(1, values)
    try:
        rep = weak_form(bundle, U, V)
    except np.linalg.LinAlgError as exc:
        logger.exception("Nonlinear term assembly failed")
        raise RuntimeError("Nonlinear term assembly failed") from exc
    return HeatableRep(
        cochain=Cochain(1, rep),
        provenance="div(U (x) V) weak form against reconstructed tests, boundary flux kept, star_1 solve",
    )


# ----------------------------------------------------------------------
# Commutator, defect and vanishing profile
# ----------------------------------------------------------------------


def commutator_W(bundle: OperatorBundle, cache: SpectralCache, V: np.ndarray, s: float) -> np.ndarray:
    """W(s) = S(3s) div(V (x) V) - S(s) div(V^2s (x) V^2s)."""
    if s <= 0:
        raise ValueError("s must be positive")
    heated = heat_apply(cache, V, 2.0 * s)
    return heat_apply(cache, weak_form(bundle, V, V), 3.0 * s) - heat_apply(
        cache, weak_form(bundle, heated, heated), s
    )


def defect_components(
    bundle: OperatorBundle, cache: SpectralCache, V: np.ndarray, sigma: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    The three terms of N(sigma) with U2 = S(2 sigma) V:
    2 Delta S(sigma) B(U2, U2), -2 S(sigma) B(Delta U2, U2), -2 S(sigma) B(U2, Delta U2).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    heated = heat_apply(cache, V, 2.0 * sigma)
    lap = laplace_apply(cache, heated)
    first = 2.0 * laplace_apply(cache, heat_apply(cache, weak_form(bundle, heated, heated), sigma))
    second = -2.0 * heat_apply(cache, weak_form(bundle, lap, heated), sigma)
    third = -2.0 * heat_apply(cache, weak_form(bundle, heated, lap), sigma)
    return first, second, third


def commutator_defect_N(
    bundle: OperatorBundle, cache: SpectralCache, V: np.ndarray, sigma: float
) -> np.ndarray:
    """N(sigma) = dW/dsigma - 3 Delta W(sigma)."""
    first, second, third = defect_components(bundle, cache, V, sigma)
    return first + second + third


def vanishing_profile(
    bundle: OperatorBundle,
    cache: SpectralCache,
    V_series: Sequence[np.ndarray],
    s_grid: Sequence[float],
) -> List[Dict[str, float]]:
    """Rows (index, s, A) with A(t, s) = s^(1/3) |S(s/2) V(t)|_{W^{1,3}}."""
    rows = []
    for index, V in enumerate(V_series):
        for s in s_grid:
            heated = heat_apply(cache, V, 0.5 * s)
            rows.append(
                {
                    "index": index,
                    "s": float(s),
                    "A": float(s ** (1.0 / 3.0) * w1p_norm(bundle, heated, 3.0).value),
                }
            )
    return rows


def a_sup(rows: List[Dict[str, float]], s0: float) -> float:
    """sup of A over the rows with s <= s0."""
    values = [row["A"] for row in rows if row["s"] <= s0 * (1 + 1e-12)]
    return max(values) if values else 0.0


@dataclass(frozen=True)
class VanishingCheck:
    """Worst ratio A(t, s) / (s^(1/3) |V(t)|_{W^{1,3}}) and sup A per dyadic s0."""

    scales: List[float]
    sups: List[float]
    bound_ratio: float

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.sups, self.sups[1:]))


def vanishing_check(
    bundle: OperatorBundle,
    cache: SpectralCache,
    V_series: Sequence[np.ndarray],
    s0: float,
    halvings: int = 3,
) -> VanishingCheck:
    """
    Compare the vanishing profile with s^(1/3) |V|_{W^{1,3}} on s0 2^-k, k <= halvings.

    Raises:
        ValueError: For s0 <= 0 or fewer than one halving.
    """
    # ---- Guard clauses ----
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    if halvings < 1:
        raise ValueError("need at least one halving")

    scales = [s0 * 2.0**-k for k in range(halvings + 1)]
    rows = vanishing_profile(bundle, cache, V_series, scales)
    norms = [w1p_norm(bundle, V, 3.0).value for V in V_series]
    ratio = 0.0
    for row in rows:
        bound = row["s"] ** (1.0 / 3.0) * norms[row["index"]]
        if bound > 0:
            ratio = max(ratio, row["A"] / bound)
    sups = [a_sup(rows, s) for s in scales]
    logger.info("Vanishing check: bound ratio %.3g, sups %s", ratio, sups)
    return VanishingCheck(scales=scales, sups=sups, bound_ratio=float(ratio))


# ----------------------------------------------------------------------
# Time cutoff, ledger and weak residual
# ----------------------------------------------------------------------


def _check_uniform(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise ValueError("need at least 3 time samples")
    steps = np.diff(times)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("time grid must be uniform and increasing")
    return float(steps[0])


def time_cutoff(times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    eta(t) = (1 - x^2)^4 / (BUMP_MASS * T) and its derivative, x = 2 (t - t0) / T.

    x is built from integer offsets, so eta' is exactly antisymmetric on the grid.
    """
    _check_uniform(times)
    n = len(times)
    span = float(times[-1] - times[0])
    x = (2.0 * np.arange(n) - (n - 1)) / (n - 1)
    eta = (1.0 - x**2) ** 4 / (BUMP_MASS * span)
    eta_prime = -8.0 * x * (1.0 - x**2) ** 3 / (BUMP_MASS * span) * (2.0 / span)
    return eta, eta_prime


def energy_pairing(cache: SpectralCache, times: np.ndarray, fields: Sequence[np.ndarray], eps: float) -> float:
    """int eta' <<V^eps, V^eps>> dt."""
    step = _check_uniform(times)
    _, eta_prime = time_cutoff(times)
    values = []
    for dn, V in zip(eta_prime, fields):
        heated = heat_apply(cache, V, eps)
        values.append(dn * float(np.sum(cache.mass * heated * heated)))
    return float(integrate.trapezoid(values, dx=step))


def commutator_pairing(
    bundle: OperatorBundle,
    cache: SpectralCache,
    times: np.ndarray,
    fields: Sequence[np.ndarray],
    eps: float,
) -> float:
    """int eta <<W(eps), S(eps) V>> dt."""
    step = _check_uniform(times)
    eta, _ = time_cutoff(times)
    values = np.zeros(len(eta))
    for k, (e, V) in enumerate(zip(eta, fields)):
        if e == 0.0:
            continue
        pairing = np.sum(cache.mass * commutator_W(bundle, cache, V, eps) * heat_apply(cache, V, eps))
        values[k] = e * float(pairing)
    return float(integrate.trapezoid(values, dx=step))


def commutator_sweep(
    bundle: OperatorBundle,
    cache: SpectralCache,
    trace: "FlowTrace",
    eps0: float,
    points: int = 4,
) -> List[Dict[str, float]]:
    """Commutator pairing of the trace on the dyadic sweep eps0 2^-k, k < points."""
    if eps0 <= 0 or points < 2:
        raise ValueError("need eps0 > 0 and at least 2 sweep points")
    times = np.asarray(trace.times, dtype=float)
    rows = []
    for k in range(points):
        eps = eps0 * 2.0**-k
        rows.append(
            {
                "eps": eps,
                "commutator_pairing": commutator_pairing(bundle, cache, times, trace.fields, eps),
            }
        )
    return rows


def resolved_scale(cache: SpectralCache, fraction: float = 0.01) -> float:
    """Heat time below which exp(-lambda eps) is affine in eps on the whole spectrum."""
    return fraction / cache.lambda_cut


def non_increasing(values: Sequence[float], slack: float = 0.1) -> bool:
    """|v_k+1| <= (1 + slack) |v_k| along the sequence."""
    magnitudes = np.abs(np.asarray(values, dtype=float))
    return bool(np.all(magnitudes[1:] <= (1.0 + slack) * magnitudes[:-1]))


def make_test_fields(
    bundle: OperatorBundle, cache: SpectralCache, test_class: str, count: int = 4
) -> List[np.ndarray]:
    """
    Spatial parts of weak-form tests: low eigenfields, possibly restricted.

    "interior" zeroes every edge touching the boundary, "tangential" keeps the
    absolute eigenfields, "leray" projects them onto ker(delta_c).
    """
    if test_class not in TEST_CLASSES:
        raise ValueError(f"test_class must be one of {TEST_CLASSES}")
    if cache.degree != 1:
        raise ValueError("weak-form tests are 1-cochains")
    fields = [cache.eigenfields[:, i].copy() for i in range(min(count, cache.eigenfields.shape[1]))]
    if test_class == "interior":
        mesh = bundle.mesh
        touching = np.isin(mesh.edges, mesh.boundary_vertices).any(axis=1)
        for field in fields:
            field[touching] = 0.0
    elif test_class == "leray":
        fields = [leray_project(bundle, field) for field in fields]
    return fields


def weak_residual(
    bundle: OperatorBundle,
    trace: "FlowTrace",
    pressure_series: Sequence[np.ndarray],
    tests: Sequence[np.ndarray],
) -> float:
    """
    max over tests X of |int eta' <<V, X>> - eta <<div(V (x) V), X>> - eta <<p, delta_c X>> dt|.
    """
    times = np.asarray(trace.times, dtype=float)
    if len(pressure_series) != len(trace.fields):
        raise ValueError("one pressure per trace snapshot is required")
    step = _check_uniform(times)
    eta, eta_prime = time_cutoff(times)
    reps = [weak_form(bundle, V, V) for V in trace.fields]

    worst = 0.0
    for X in tests:
        div_x = bundle.codifferential(1, X)
        integrand = [
            dn * bundle.inner(1, V, X) - e * bundle.inner(1, rep, X) - e * bundle.inner(0, p, div_x)
            for e, dn, V, rep, p in zip(eta, eta_prime, trace.fields, reps, pressure_series)
        ]
        worst = max(worst, abs(float(integrate.trapezoid(integrand, dx=step))))
    return float(worst)


def energy_ledger(
    bundle: OperatorBundle,
    cache: SpectralCache,
    trace: "FlowTrace",
    eps_list: Sequence[float],
    test_class: str = "leray",
) -> List[LedgerRow]:
    """
    One LedgerRow per eps: energy pairing, commutator pairing, sup of A and the
    weak residual of the mollified trace with its recovered pressure.

    Raises:
        ValueError: On a non-uniform time grid.
    """
    times = np.asarray(trace.times, dtype=float)
    _check_uniform(times)
    tests = make_test_fields(bundle, cache, test_class)
    t0 = 0.5 * float(times[0] + times[-1])

    rows = []
    for eps in eps_list:
        heated = [heat_apply(cache, V, eps) for V in trace.fields]
        pressures = [pressure_recover(bundle, weak_form(bundle, V, V)) for V in heated]
        mollified = type(trace)(times=times, fields=heated, meta=dict(trace.meta))
        profile = vanishing_profile(bundle, cache, trace.fields, [eps])
        rows.append(
            LedgerRow(
                t0=t0,
                eps=float(eps),
                energy_pairing=energy_pairing(cache, times, trace.fields, eps),
                commutator_pairing=commutator_pairing(bundle, cache, times, trace.fields, eps),
                A_sup=a_sup(profile, eps),
                weak_residual=weak_residual(bundle, mollified, pressures, tests),
            )
        )
        logger.info("Ledger eps=%g energy=%.3e", eps, rows[-1].energy_pairing)
    return rows


# ----------------------------------------------------------------------
# Time stepping
# ----------------------------------------------------------------------


def cfl_limit(bundle: OperatorBundle, V: np.ndarray) -> float:
    """Largest admissible dt = 0.5 h / max |u_T| (inf for V = 0)."""
    speed = float(np.max(np.linalg.norm(whitney_sharp(bundle, V), axis=1)))
    if speed == 0.0:
        return float("inf")
    return CFL_NUMBER * mesh_size(bundle.mesh) / speed


def _tendency(bundle: OperatorBundle, V: np.ndarray) -> np.ndarray:
    return -leray_project(bundle, weak_form(bundle, V, V))


def galerkin_step(bundle: OperatorBundle, V: np.ndarray, dt: float, scheme: str = "RK4") -> np.ndarray:
    """
    One RK4 step of dV/dt = -P(div(V (x) V)).

    Raises:
        ValueError: For dt <= 0, dt above the CFL limit or an unknown scheme.
    """
    # ---- Guard clauses ----
    if scheme != "RK4":
        raise ValueError(f"unsupported scheme {scheme!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    V = np.asarray(V, dtype=float)
    limit = cfl_limit(bundle, V)
    if dt > limit:
        raise ValueError(f"dt={dt:.3g} exceeds the CFL limit {limit:.3g}")

    k1 = _tendency(bundle, V)
    k2 = _tendency(bundle, V + 0.5 * dt * k1)
    k3 = _tendency(bundle, V + 0.5 * dt * k2)
    k4 = _tendency(bundle, V + dt * k3)
    return V + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def energy(bundle: OperatorBundle, V: np.ndarray) -> float:
    return 0.5 * bundle.inner(1, V, V)
