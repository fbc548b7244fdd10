"""
Boundary-conditioned Hodge Laplacians and everything built on them.

Provides:
- LaplacianHandle for -Delta under the absolute Neumann or relative Dirichlet
  condition: spectrum, mass-orthonormal harmonic basis, potentials
- The Hodge-Morrey split p1 + p2 + p3 and its Friedrichs refinement of p3
- Leray projection, the Hodge-Dirac operator and Hodge-Sobolev norms
- Pressure recovery through the Helmholtz route and the Dirichlet route

Design principles:
- All solves use the PSD operator -Delta = M^-1 K with K symmetric and M the
  diagonal star of the degree
- A kernel eigenvalue must sit below 1e-8 * lambda_max and be separated from
  the first kept eigenvalue by a factor of at least 100
- Handles are cached per (bundle, degree, condition); the bordered potential
  system is factorized once
"""

import dataclasses
import functools
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh, splu

from .dec import ABSOLUTE, RELATIVE, Cochain, OperatorBundle

logger = logging.getLogger(__name__)

ABSOLUTE_NEUMANN = "absolute_neumann"
RELATIVE_DIRICHLET = "relative_dirichlet"
CONDITION_COMPLEX = {ABSOLUTE_NEUMANN: ABSOLUTE, RELATIVE_DIRICHLET: RELATIVE}

ZERO_THRESHOLD = 1e-8
SPECTRAL_GAP = 100.0
DENSE_LIMIT = 4000
DEFAULT_MODES = 64
SYMMETRY_TOLERANCE = 1e-12
RITZ_FLOOR = 1e-10
HARMONIC_TOLERANCE = 1e-8


def stiffness(bundle: OperatorBundle, k: int, complex: str = ABSOLUTE) -> sparse.csr_matrix:
    """K = M(-Delta) assembled from d and the stars of the chosen complex."""
    d = bundle.d_rel if complex == RELATIVE else bundle.d
    n = bundle.size(k, complex)
    matrix = sparse.csr_matrix((n, n))
    if k < 2:
        matrix = matrix + d[k].T @ sparse.diags(bundle.masses(k + 1, complex)) @ d[k]
    if k > 0:
        lowered = sparse.diags(bundle.masses(k, complex)) @ d[k - 1]
        matrix = matrix + lowered @ sparse.diags(1.0 / bundle.masses(k - 1, complex)) @ lowered.T
    return sparse.csr_matrix(matrix)


class LaplacianHandle:
    """
    -Delta on k-cochains under one boundary condition.

    Attributes:
        degree: k.
        bc: "absolute_neumann" or "relative_dirichlet".
        stiffness: Symmetric PSD matrix K.
        mass: Diagonal star weights M.
        eigenvalues: Ascending; the harmonic ones are the first n_harmonic.
        eigenvectors: Mass-orthonormal columns matching eigenvalues.
        full_spectrum: False when only the lowest modes were computed.
    """

    def __init__(
        self,
        bundle: OperatorBundle,
        k: int,
        bc: str,
        n_modes: int = DEFAULT_MODES,
        dense_limit: int = DENSE_LIMIT,
    ):
        # ---- Guard clauses ----
        if k not in (0, 1, 2):
            raise ValueError(f"degree must be 0, 1 or 2, got {k}")
        if bc not in CONDITION_COMPLEX:
            raise ValueError(f"bc must be one of {sorted(CONDITION_COMPLEX)}, got {bc!r}")
        if n_modes < 2:
            raise ValueError("n_modes must be at least 2")

        self.bundle = bundle
        self.degree = k
        self.bc = bc
        self.complex = CONDITION_COMPLEX[bc]
        self.stiffness = stiffness(bundle, k, self.complex)
        self.mass = bundle.masses(k, self.complex)
        self.size = len(self.mass)

        self._check_symmetry()
        if self.size == 0:
            self.eigenvalues = np.zeros(0)
            self.eigenvectors = np.zeros((0, 0))
            self.full_spectrum = True
            self.lambda_max = 0.0
        elif self.size <= dense_limit:
            self._dense_spectrum()
        else:
            self._sparse_spectrum(n_modes)
        self.n_harmonic = self._count_harmonic()
        self.harmonic = self.eigenvectors[:, : self.n_harmonic]
        logger.info(
            "Laplacian k=%d %s: %d simplices, %d harmonic, %s spectrum",
            k,
            bc,
            self.size,
            self.n_harmonic,
            "full" if self.full_spectrum else "partial",
        )

    # ---- construction ----

    def _check_symmetry(self) -> None:
        if self.size == 0:
            return
        scale = abs(self.stiffness).max()
        asymmetry = abs(self.stiffness - self.stiffness.T).max() if scale > 0 else 0.0
        if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1.0):
            raise RuntimeError(f"stiffness matrix is not symmetric ({asymmetry:.3g})")

    def _scaled(self) -> sparse.csr_matrix:
        inv_sqrt = sparse.diags(1.0 / np.sqrt(self.mass))
        return sparse.csr_matrix(inv_sqrt @ self.stiffness @ inv_sqrt)

    def _dense_spectrum(self) -> None:
        scaled = self._scaled().toarray()
        try:
            values, vectors = scipy.linalg.eigh(0.5 * (scaled + scaled.T))
        except np.linalg.LinAlgError as exc:
            logger.exception("Dense eigen solve failed")
            raise RuntimeError("Laplacian eigen solve failed") from exc
        self.eigenvalues = values
        self.eigenvectors = vectors / np.sqrt(self.mass)[:, None]
        self.full_spectrum = True
        self.lambda_max = float(values[-1])

    def _sparse_spectrum(self, n_modes: int) -> None:
        scaled = self._scaled()
        count = min(n_modes, self.size - 2)
        try:
            top = eigsh(scaled, k=1, which="LA", return_eigenvectors=False)
            self.lambda_max = float(top[0])
            shift = 1e-6 * self.lambda_max
            values, vectors = eigsh(scaled, k=count, sigma=-shift, which="LM")
        except (ArpackNoConvergence, ArpackError, RuntimeError) as exc:
            logger.exception("Sparse eigen solve failed")
            raise RuntimeError(
                "Laplacian eigen solve did not converge; refine the mesh or raise modes"
            ) from exc
        order = np.argsort(values)
        self.eigenvalues = values[order]
        vectors = vectors[:, order]
        # ARPACK output is only approximately orthonormal.
        vectors, _ = np.linalg.qr(vectors)
        self.eigenvectors = vectors / np.sqrt(self.mass)[:, None]
        self.full_spectrum = False
        logger.warning(
            "Partial spectrum: %d of %d modes for k=%d %s",
            count,
            self.size,
            self.degree,
            self.bc,
        )

    def _count_harmonic(self) -> int:
        values = self.eigenvalues
        if values.size == 0:
            return 0
        if self.lambda_max <= 0:
            return len(values)
        if values.min() < -RITZ_FLOOR * self.lambda_max:
            raise RuntimeError(f"negative Ritz value {values.min():.3g}; operator not PSD")
        threshold = ZERO_THRESHOLD * self.lambda_max
        count = int(np.sum(values < threshold))
        if count == len(values):
            if not self.full_spectrum:
                raise RuntimeError("every computed mode is harmonic; raise modes")
            return count
        floor = max(
            float(np.abs(values[:count]).max()) if count else 0.0,
            1e-14 * self.lambda_max,
        )
        if values[count] < SPECTRAL_GAP * floor:
            raise RuntimeError(
                f"no spectral gap above the harmonic block "
                f"({values[count]:.3g} vs {floor:.3g}); refine the mesh"
            )
        return count

    # ---- application ----

    def apply(self, values: np.ndarray) -> np.ndarray:
        """-Delta applied to a cochain of this complex."""
        return (self.stiffness @ values) / self.mass

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Mass inner products with the computed eigenvectors."""
        return self.eigenvectors.T @ (self.mass * values)

    def project_harmonic(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.n_harmonic == 0:
            return np.zeros_like(values)
        return self.harmonic @ (self.harmonic.T @ (self.mass * values))

    def project_perp(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return values - self.project_harmonic(values)

    def _source(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.complex == RELATIVE and values.shape[0] != self.size:
            if values.shape[0] == self.bundle.size(self.degree, ABSOLUTE):
                return self.bundle.restrict(self.degree, values)
        if values.shape != (self.size,):
            raise ValueError(
                f"source needs {self.size} values for k={self.degree} {self.bc}, "
                f"got {values.shape[0]}"
            )
        return values

    @functools.cached_property
    def _solver(self):
        if self.n_harmonic == 0:
            bordered = sparse.csc_matrix(self.stiffness)
        else:
            harmonic_load = sparse.csr_matrix(self.mass[:, None] * self.harmonic)
            bordered = sparse.bmat(
                [[self.stiffness, harmonic_load], [harmonic_load.T, None]],
                format="csc",
            )
        try:
            return splu(bordered)
        except RuntimeError as exc:
            logger.exception("Potential factorization failed")
            raise RuntimeError("Potential factorization failed") from exc

    def potential(self, values: np.ndarray) -> np.ndarray:
        """
        Solve -Delta u = P_perp(eta) with u orthogonal to the harmonic fields.

        For a relative handle an absolute source is first restricted to the
        interior simplices.
        """
        source = self.project_perp(self._source(values))
        if self.size == 0:
            return source
        rhs = np.concatenate([self.mass * source, np.zeros(self.n_harmonic)])
        solution = self._solver.solve(rhs)[: self.size]
        return solution


@functools.lru_cache(maxsize=64)
def laplacian(
    bundle: OperatorBundle,
    k: int,
    bc: str = ABSOLUTE_NEUMANN,
    n_modes: int = DEFAULT_MODES,
    dense_limit: int = DENSE_LIMIT,
) -> LaplacianHandle:
    """
    Build (or fetch) the Laplacian handle of degree k.

    Raises:
        ValueError: On an unknown degree or boundary condition.
        RuntimeError: If the eigen solve fails or the kernel is ambiguous.
    """
    return LaplacianHandle(bundle, k, bc, n_modes=n_modes, dense_limit=dense_limit)


def harmonic_basis(handle: LaplacianHandle) -> List[Cochain]:
    return [
        Cochain(handle.degree, handle.harmonic[:, i].copy(), handle.complex)
        for i in range(handle.n_harmonic)
    ]


def harmonic_dimensions(bundle: OperatorBundle, bc: str = ABSOLUTE_NEUMANN) -> Tuple[int, int, int]:
    """Betti numbers read off as kernel dimensions of the Laplacians."""
    return tuple(laplacian(bundle, k, bc).n_harmonic for k in (0, 1, 2))


# ----------------------------------------------------------------------
# Hodge-Morrey-Friedrichs
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionResult:
    """
    omega = p1 + p2 + p3 with p1 relative-exact, p2 coexact, p3 harmonic.

    p3N / p3ex stay None until friedrichs_split fills them.
    """

    degree: int
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    residual: float
    p3N: Optional[np.ndarray] = None
    p3ex: Optional[np.ndarray] = None


def hodge_morrey(bundle: OperatorBundle, omega: Cochain) -> DecompositionResult:
    """
    Split an absolute k-cochain into p1 = d_rel delta_rel u_D,
    p2 = delta_c d u_N and the harmonic remainder p3.

    delta_c p3 vanishes on interior (k-1)-simplices; its boundary rows carry
    the normal component of p3.

    Raises:
        ValueError: If omega is not an absolute cochain of this mesh.
        RuntimeError: Propagated from the potential solves.
    """
    # ---- Guard clauses ----
    if omega.complex != ABSOLUTE:
        raise ValueError("hodge_morrey expects an absolute cochain")
    bundle.cochain(omega.degree, omega.values)

    k = omega.degree
    values = omega.values
    p1 = np.zeros_like(values)
    p2 = np.zeros_like(values)
    if k > 0:
        u_dirichlet = laplacian(bundle, k, RELATIVE_DIRICHLET).potential(values)
        lowered = bundle.codifferential(k, u_dirichlet, RELATIVE)
        p1 = bundle.extend(k, bundle.exterior(k - 1, lowered, RELATIVE))
    if k < 2:
        u_neumann = laplacian(bundle, k, ABSOLUTE_NEUMANN).potential(values)
        p2 = bundle.codifferential(k + 1, bundle.exterior(k, u_neumann))
    p3 = values - p1 - p2
    residual = bundle.norm(k, values - (p1 + p2 + p3))
    return DecompositionResult(degree=k, p1=p1, p2=p2, p3=p3, residual=residual)


def friedrichs_split(
    result: DecompositionResult, neumann_handle: LaplacianHandle
) -> DecompositionResult:
    """p3 = p3N + p3ex with p3N the Neumann-harmonic projection."""
    # ---- Guard clauses ----
    if neumann_handle.bc != ABSOLUTE_NEUMANN or neumann_handle.degree != result.degree:
        raise ValueError("friedrichs_split needs the absolute handle of the same degree")

    p3N = neumann_handle.project_harmonic(result.p3)
    return dataclasses.replace(result, p3N=p3N, p3ex=result.p3 - p3N)


def projections(bundle: OperatorBundle, omega: Cochain) -> Tuple[np.ndarray, ...]:
    """(p1, p2, p3) as plain arrays, convenient for projection algebra."""
    result = hodge_morrey(bundle, omega)
    return result.p1, result.p2, result.p3


# ----------------------------------------------------------------------
# Leray projection
# ----------------------------------------------------------------------


def leray_potential(bundle: OperatorBundle, omega: np.ndarray) -> np.ndarray:
    """Mean-zero phi with delta_c d phi = delta_c omega."""
    handle = laplacian(bundle, 0, ABSOLUTE_NEUMANN)
    return handle.potential(bundle.codifferential(1, np.asarray(omega, dtype=float)))


def leray_project(bundle: OperatorBundle, omega: np.ndarray) -> np.ndarray:
    """
    Orthogonal projection onto ker(delta_c): omega - d phi.

    Equals p2 + p3N of the Hodge-Morrey-Friedrichs split.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (bundle.size(1),):
        raise ValueError(f"leray_project needs {bundle.size(1)} edge values")
    return omega - bundle.exterior(0, leray_potential(bundle, omega))


# ----------------------------------------------------------------------
# Hodge-Dirac operator
# ----------------------------------------------------------------------


def graded_split(bundle: OperatorBundle, graded: np.ndarray) -> List[np.ndarray]:
    sizes = [bundle.size(k) for k in (0, 1, 2)]
    graded = np.asarray(graded, dtype=float)
    if graded.shape != (sum(sizes),):
        raise ValueError(f"graded cochain needs {sum(sizes)} values, got {graded.shape}")
    return np.split(graded, np.cumsum(sizes)[:-1])


def graded_join(parts: List[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def graded_mass(bundle: OperatorBundle) -> np.ndarray:
    return np.concatenate([bundle.masses(k) for k in (0, 1, 2)])


def graded_inner(bundle: OperatorBundle, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(graded_mass(bundle) * a * b))


def graded_harmonic_projection(bundle: OperatorBundle, graded: np.ndarray) -> np.ndarray:
    parts = graded_split(bundle, graded)
    return graded_join(
        [laplacian(bundle, k, ABSOLUTE_NEUMANN).project_harmonic(parts[k]) for k in (0, 1, 2)]
    )


def dirac_apply(bundle: OperatorBundle, graded: np.ndarray) -> np.ndarray:
    """D = d + delta_c on [Omega0, Omega1, Omega2]."""
    omega0, omega1, omega2 = graded_split(bundle, graded)
    return graded_join(
        [
            bundle.codifferential(1, omega1),
            bundle.exterior(0, omega0) + bundle.codifferential(2, omega2),
            bundle.exterior(1, omega1),
        ]
    )


def laplace_graded(bundle: OperatorBundle, graded: np.ndarray) -> np.ndarray:
    """-Delta on a graded cochain, degree by degree."""
    parts = graded_split(bundle, graded)
    return graded_join(
        [laplacian(bundle, k, ABSOLUTE_NEUMANN).apply(parts[k]) for k in (0, 1, 2)]
    )


def dirac_inverse(bundle: OperatorBundle, graded: np.ndarray) -> np.ndarray:
    """
    Inverse of D on the complement of the Neumann-harmonic fields: D(-Delta)^-1.

    Raises:
        ValueError: If the input has a harmonic part.
    """
    graded = np.asarray(graded, dtype=float)
    harmonic = graded_harmonic_projection(bundle, graded)
    scale = np.sqrt(max(graded_inner(bundle, graded, graded), 0.0))
    if np.sqrt(graded_inner(bundle, harmonic, harmonic)) > HARMONIC_TOLERANCE * max(scale, 1e-300):
        raise ValueError("dirac_inverse input has a nonzero harmonic part")

    parts = graded_split(bundle, graded)
    potentials = [
        laplacian(bundle, k, ABSOLUTE_NEUMANN).potential(parts[k]) for k in (0, 1, 2)
    ]
    return dirac_apply(bundle, graded_join(potentials))


def hodge_sobolev_norm(bundle: OperatorBundle, graded: np.ndarray, m: int) -> float:
    """
    sqrt(sum lambda^m c^2 over non-harmonic modes + |P^N Omega|^2).

    Equals the graded mass norm for m = 0 and lambda * |phi| on an eigenfield
    for m = 2.

    Raises:
        ValueError: If m lies outside [-4, 4] or a spectrum is partial.
    """
    # ---- Guard clauses ----
    if not -4 <= m <= 4:
        raise ValueError("m must lie in [-4, 4]")

    total = 0.0
    for k, part in enumerate(graded_split(bundle, graded)):
        handle = laplacian(bundle, k, ABSOLUTE_NEUMANN)
        if not handle.full_spectrum:
            raise ValueError("hodge_sobolev_norm needs a full spectrum; use a smaller mesh")
        coeffs = handle.coefficients(part)
        h = handle.n_harmonic
        total += float(np.sum(coeffs[:h] ** 2))
        total += float(np.sum(handle.eigenvalues[h:] ** m * coeffs[h:] ** 2))
    return float(np.sqrt(total))


def poincare_constants(
    bundle: OperatorBundle, samples: int = 20, seed: int = 0
) -> Tuple[float, float, float]:
    """
    Constants of c1 |w|_H1 <= |dw| + |delta_c w| <= c2 |w|_H1 on P^N-perp 1-cochains.

    |w|_H1 is the surrogate sqrt(|w|^2 + |dw|^2 + |delta_c w|^2); c1 comes from
    the smallest nonzero eigenvalue, c2 from random samples.

    Returns:
        (c1, c2, c2 / c1)
    """
    handle = laplacian(bundle, 1, ABSOLUTE_NEUMANN)
    if handle.n_harmonic >= len(handle.eigenvalues):
        raise ValueError("no nonzero eigenvalue available")
    lam1 = float(handle.eigenvalues[handle.n_harmonic])
    c1 = float(np.sqrt(lam1 / (1.0 + lam1)))

    rng = np.random.default_rng(seed)
    c2 = 0.0
    for _ in range(samples):
        omega = handle.project_perp(rng.standard_normal(bundle.size(1)))
        d_norm = bundle.norm(2, bundle.exterior(1, omega))
        delta_norm = bundle.norm(0, bundle.codifferential(1, omega))
        h1 = np.sqrt(bundle.norm(1, omega) ** 2 + d_norm**2 + delta_norm**2)
        c2 = max(c2, (d_norm + delta_norm) / h1)
    return c1, float(c2), float(c2 / c1)


# ----------------------------------------------------------------------
# Pressure
# ----------------------------------------------------------------------


def pressure_recover(bundle: OperatorBundle, divVV: np.ndarray) -> np.ndarray:
    """
    Mean-zero pressure with d p = (P - 1) divVV.

    Args:
        bundle: Operators of the mesh.
        divVV: Riesz representative of the nonlinear term (edge values).

    Returns:
        Vertex values of p.
    """
    divVV = np.asarray(divVV, dtype=float)
    if divVV.shape != (bundle.size(1),):
        raise ValueError(f"divVV needs {bundle.size(1)} edge values")
    try:
        return -leray_potential(bundle, divVV)
    except RuntimeError:
        raise
    except Exception as exc:
        logger.exception("Pressure recovery failed")
        raise RuntimeError("Pressure recovery failed") from exc


def _remove_mean(bundle: OperatorBundle, values: np.ndarray) -> np.ndarray:
    weights = bundle.masses(0)
    return values - np.dot(weights, values) / weights.sum()


def pressure_recover_dirichlet(bundle: OperatorBundle, divVV: np.ndarray) -> np.ndarray:
    """
    Pressure by the composite route -(delta_rel u_D + delta_c u_N).

    u_D is the relative potential of divVV and u_N the Neumann potential of
    its exact-harmonic part; agrees with pressure_recover to solver precision.
    """
    divVV = np.asarray(divVV, dtype=float)
    if divVV.shape != (bundle.size(1),):
        raise ValueError(f"divVV needs {bundle.size(1)} edge values")

    omega = bundle.cochain(1, divVV)
    neumann = laplacian(bundle, 1, ABSOLUTE_NEUMANN)
    split = friedrichs_split(hodge_morrey(bundle, omega), neumann)

    u_dirichlet = laplacian(bundle, 1, RELATIVE_DIRICHLET).potential(divVV)
    relative_part = bundle.extend(0, bundle.codifferential(1, u_dirichlet, RELATIVE))
    exact_harmonic_part = bundle.codifferential(1, neumann.potential(split.p3ex))
    return _remove_mean(bundle, -(relative_part + exact_harmonic_part))
