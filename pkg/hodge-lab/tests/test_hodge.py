"""
Unit tests for Hodge Laplacians, the Hodge-Morrey-Friedrichs split, Leray
projection, the Hodge-Dirac operator and pressure recovery.
"""

import numpy as np
import pytest

from backend.app.core.dec import ABSOLUTE, Cochain, build_operators, loop_integral
from backend.app.core.hodge import (
    ABSOLUTE_NEUMANN,
    RELATIVE_DIRICHLET,
    dirac_apply,
    dirac_inverse,
    friedrichs_split,
    graded_harmonic_projection,
    graded_inner,
    graded_join,
    harmonic_basis,
    harmonic_dimensions,
    hodge_morrey,
    hodge_sobolev_norm,
    laplace_graded,
    laplacian,
    leray_project,
    poincare_constants,
    pressure_recover,
    pressure_recover_dirichlet,
    projections,
)
from backend.app.core.mesh import (
    annulus_mesh,
    boundary_loops,
    disk_mesh,
    generator_loops,
    sphere_mesh,
    torus_mesh,
)


@pytest.fixture(scope="module")
def annulus():
    return build_operators(annulus_mesh(rings=3, sectors=24))


@pytest.fixture(scope="module")
def disk():
    return build_operators(disk_mesh(rings=4, sectors=6))


def make_random(bundle, k: int = 1, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(bundle.size(k))


def relative_norm(bundle, k, values, reference) -> float:
    return bundle.norm(k, values) / bundle.norm(k, reference)


class TestLaplacian:
    """Spectra, harmonic counts and guards."""

    def test_annulus_harmonic_dimensions(self, annulus):
        """Should find the annulus harmonic dimensions for both conditions."""
        assert harmonic_dimensions(annulus, ABSOLUTE_NEUMANN) == (1, 1, 0)
        assert harmonic_dimensions(annulus, RELATIVE_DIRICHLET) == (0, 1, 1)

    def test_disk_harmonic_dimensions(self, disk):
        """Should find the disk harmonic dimensions for both conditions."""
        assert harmonic_dimensions(disk, ABSOLUTE_NEUMANN) == (1, 0, 0)
        assert harmonic_dimensions(disk, RELATIVE_DIRICHLET) == (0, 0, 1)

    def test_closed_surfaces(self):
        """Should find the Betti numbers of the sphere and the torus."""
        sphere = build_operators(sphere_mesh(subdiv=1))
        torus = build_operators(torus_mesh(nx=6, ny=6))
        assert harmonic_dimensions(sphere) == (1, 0, 1)
        assert harmonic_dimensions(torus) == (1, 2, 1)

    def test_eigenvectors_are_mass_orthonormal(self, annulus):
        """Should return mass-orthonormal eigenvectors."""
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        gram = handle.eigenvectors.T @ (handle.mass[:, None] * handle.eigenvectors)
        np.testing.assert_allclose(gram, np.eye(handle.size), atol=1e-9)

    def test_harmonic_basis_is_annihilated(self, annulus):
        """Should annihilate the harmonic basis."""
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        (field,) = harmonic_basis(handle)
        assert field.complex == ABSOLUTE
        assert annulus.norm(1, handle.apply(field.values)) < 1e-8 * handle.lambda_max

    def test_sparse_path_matches_dense_low_modes(self, disk):
        """Should match the dense spectrum on low modes."""
        dense = laplacian(disk, 0, ABSOLUTE_NEUMANN)
        sparse_handle = laplacian(disk, 0, ABSOLUTE_NEUMANN, n_modes=8, dense_limit=10)
        assert not sparse_handle.full_spectrum
        np.testing.assert_allclose(
            sparse_handle.eigenvalues[1:], dense.eigenvalues[1:8], rtol=1e-7
        )
        assert sparse_handle.n_harmonic == 1

    def test_invalid_degree_raises(self, disk):
        """Should reject degrees outside 0, 1, 2."""
        with pytest.raises(ValueError, match="degree must be 0, 1 or 2"):
            laplacian(disk, 3)

    def test_invalid_condition_raises(self, disk):
        """Should reject unknown boundary conditions."""
        with pytest.raises(ValueError, match="bc must be one of"):
            laplacian(disk, 1, "periodic")

    def test_potential_solves_the_poisson_problem(self, annulus):
        """Should solve the Poisson problem orthogonal to harmonics."""
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        source = handle.project_perp(make_random(annulus))
        u = handle.potential(source)
        assert relative_norm(annulus, 1, handle.apply(u) - source, source) < 1e-9
        assert np.abs(handle.harmonic.T @ (handle.mass * u)).max() < 1e-9


class TestHodgeMorrey:
    """Orthogonal split p1 + p2 + p3 and its Friedrichs refinement."""

    def test_random_field_split_is_orthogonal(self, annulus):
        """Should split a field into three orthogonal parts."""
        omega = make_random(annulus)
        result = hodge_morrey(annulus, Cochain(1, omega))
        parts = (result.p1, result.p2, result.p3)
        np.testing.assert_allclose(sum(parts), omega, atol=1e-12)
        scale = annulus.norm(1, omega) ** 2
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(annulus.inner(1, parts[i], parts[j])) < 1e-9 * scale

    def test_p3_is_closed_and_coclosed_inside(self, annulus):
        """Should make the harmonic part closed and coclosed inside."""
        omega = make_random(annulus, seed=4)
        result = hodge_morrey(annulus, Cochain(1, omega))
        scale = annulus.norm(1, omega)
        assert annulus.norm(2, annulus.exterior(1, result.p3)) < 1e-9 * scale
        divergence = annulus.codifferential(1, result.p3)
        assert np.abs(divergence[annulus.mesh.interior_vertices]).max() < 1e-8 * scale

    def test_p1_vanishes_tangentially_on_the_boundary(self, annulus):
        """Should give the exact part zero boundary values."""
        result = hodge_morrey(annulus, Cochain(1, make_random(annulus, seed=5)))
        assert np.all(result.p1[annulus.mesh.boundary_edges] == 0.0)

    def test_exact_field_has_no_coexact_part(self, disk):
        """Should put nothing of an exact field into the coexact part."""
        f = make_random(disk, k=0, seed=6)
        omega = disk.exterior(0, f)
        result = hodge_morrey(disk, Cochain(1, omega))
        assert relative_norm(disk, 1, result.p2, omega) < 1e-9

    def test_harmonic_field_is_fixed(self, annulus):
        """Should keep a Neumann harmonic field whole."""
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        (field,) = harmonic_basis(handle)
        result = friedrichs_split(hodge_morrey(annulus, field), handle)
        np.testing.assert_allclose(result.p3N, field.values, atol=1e-9)
        assert annulus.norm(1, result.p1 + result.p2) < 1e-9

    def test_friedrichs_parts_are_orthogonal(self, annulus):
        """Should split the harmonic part orthogonally."""
        omega = make_random(annulus, seed=7)
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        result = friedrichs_split(hodge_morrey(annulus, Cochain(1, omega)), handle)
        np.testing.assert_allclose(result.p3N + result.p3ex, result.p3, atol=1e-12)
        scale = annulus.norm(1, omega) ** 2
        assert abs(annulus.inner(1, result.p3N, result.p3ex)) < 1e-9 * scale

    def test_projections_are_idempotent(self, annulus):
        """Should reproduce a projected part."""
        p1, p2, p3 = projections(annulus, Cochain(1, make_random(annulus, seed=8)))
        again = projections(annulus, Cochain(1, p2))
        np.testing.assert_allclose(again[1], p2, atol=1e-9)
        assert annulus.norm(1, again[0]) < 1e-9 * annulus.norm(1, p2)

    def test_relative_input_raises(self, annulus):
        """Should reject relative cochains."""
        values = np.zeros(annulus.size(1, "relative"))
        with pytest.raises(ValueError, match="expects an absolute cochain"):
            hodge_morrey(annulus, Cochain(1, values, "relative"))

    def test_friedrichs_needs_matching_handle(self, annulus):
        """Should need an absolute handle of the same degree."""
        result = hodge_morrey(annulus, Cochain(1, make_random(annulus)))
        with pytest.raises(ValueError, match="absolute handle of the same degree"):
            friedrichs_split(result, laplacian(annulus, 1, RELATIVE_DIRICHLET))


class TestLeray:
    def test_projection_is_divergence_free(self, annulus):
        """Should remove the divergence."""
        omega = make_random(annulus, seed=9)
        projected = leray_project(annulus, omega)
        divergence = annulus.codifferential(1, projected)
        assert annulus.norm(0, divergence) < 1e-9 * annulus.norm(1, omega)

    def test_projection_is_idempotent(self, annulus):
        """Should leave projected fields unchanged."""
        once = leray_project(annulus, make_random(annulus, seed=10))
        np.testing.assert_allclose(leray_project(annulus, once), once, atol=1e-9)

    def test_projection_equals_coexact_plus_neumann_part(self, annulus):
        """Should equal the coexact plus the Neumann harmonic part."""
        omega = make_random(annulus, seed=11)
        handle = laplacian(annulus, 1, ABSOLUTE_NEUMANN)
        result = friedrichs_split(hodge_morrey(annulus, Cochain(1, omega)), handle)
        expected = result.p2 + result.p3N
        assert relative_norm(annulus, 1, leray_project(annulus, omega) - expected, omega) < 1e-8

    def test_wrong_length_raises(self, annulus):
        """Should reject values that are not one per edge."""
        with pytest.raises(ValueError, match="edge values"):
            leray_project(annulus, np.zeros(3))


class TestDirac:
    """D = d + delta_c, its inverse and the Hodge-Sobolev scale."""

    def make_graded(self, bundle, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return graded_join([rng.standard_normal(bundle.size(k)) for k in (0, 1, 2)])

    def test_dirac_squares_to_laplacian(self, annulus):
        """Should square to the graded Laplacian."""
        graded = self.make_graded(annulus, 12)
        lhs = dirac_apply(annulus, dirac_apply(annulus, graded))
        rhs = laplace_graded(annulus, graded)
        assert np.abs(lhs - rhs).max() < 1e-9 * np.abs(rhs).max()

    def test_dirac_inverse_inverts_off_harmonics(self, annulus):
        """Should invert D away from harmonics."""
        graded = self.make_graded(annulus, 13)
        graded = graded - graded_harmonic_projection(annulus, graded)
        recovered = dirac_apply(annulus, dirac_inverse(annulus, graded))
        error = np.sqrt(graded_inner(annulus, recovered - graded, recovered - graded))
        assert error < 1e-8 * np.sqrt(graded_inner(annulus, graded, graded))

    def test_dirac_inverse_rejects_harmonic_input(self, annulus):
        """Should refuse input with a harmonic part."""
        with pytest.raises(ValueError, match="harmonic part"):
            dirac_inverse(annulus, self.make_graded(annulus, 14))

    def test_sobolev_norm_of_order_zero_is_mass_norm(self, disk):
        """Should reduce to the mass norm at order 0."""
        graded = self.make_graded(disk, 15)
        assert hodge_sobolev_norm(disk, graded, 0) == pytest.approx(
            np.sqrt(graded_inner(disk, graded, graded)), rel=1e-10
        )

    def test_sobolev_norm_of_eigenfield(self, disk):
        """Should give lambda for an eigenfield at order 2."""
        handle = laplacian(disk, 1, ABSOLUTE_NEUMANN)
        index = handle.n_harmonic + 3
        phi = handle.eigenvectors[:, index]
        graded = graded_join([np.zeros(disk.size(0)), phi, np.zeros(disk.size(2))])
        assert hodge_sobolev_norm(disk, graded, 2) == pytest.approx(
            handle.eigenvalues[index], rel=1e-8
        )

    def test_sobolev_order_guard(self, disk):
        """Should bound the order to [-4, 4]."""
        with pytest.raises(ValueError, match=r"m must lie in \[-4, 4\]"):
            hodge_sobolev_norm(disk, self.make_graded(disk, 16), 5)

    def test_poincare_constants(self, annulus):
        """Should order the Poincare constants below sqrt(2)."""
        c1, c2, ratio = poincare_constants(annulus, samples=10, seed=0)
        assert 0 < c1 <= c2 <= np.sqrt(2.0) + 1e-12
        assert ratio == pytest.approx(c2 / c1)


class TestPressure:
    def test_routes_agree(self, annulus):
        """Should agree between the Helmholtz and Dirichlet routes."""
        source = make_random(annulus, seed=17)
        helmholtz = pressure_recover(annulus, source)
        dirichlet = pressure_recover_dirichlet(annulus, source)
        scale = annulus.norm(0, helmholtz)
        assert annulus.norm(0, helmholtz - dirichlet) < 1e-8 * scale

    def test_pressure_gradient_is_the_gradient_part(self, annulus):
        """Should return the potential of the removed gradient part."""
        source = make_random(annulus, seed=18)
        p = pressure_recover(annulus, source)
        expected = leray_project(annulus, source) - source
        np.testing.assert_allclose(annulus.exterior(0, p), expected, atol=1e-9)

    def test_pressure_has_zero_mean(self, annulus):
        """Should normalize the pressure to zero mean."""
        p = pressure_recover(annulus, make_random(annulus, seed=19))
        assert np.dot(annulus.masses(0), p) == pytest.approx(0.0, abs=1e-10)

    def test_wrong_length_raises(self, annulus):
        """Should reject values that are not one per edge."""
        with pytest.raises(ValueError, match="edge values"):
            pressure_recover(annulus, np.zeros(2))


class TestTopology:
    """Periods of harmonic fields around the holes."""

    def test_annulus_harmonic_field_circulates(self, annulus):
        """Should circulate by equal and opposite nonzero periods on both circles."""
        (field,) = harmonic_basis(laplacian(annulus, 1, ABSOLUTE_NEUMANN))
        outer, inner = sorted(
            boundary_loops(annulus.mesh),
            key=lambda loop: -np.linalg.norm(annulus.mesh.vertices[loop[0]]),
        )
        outer_period = loop_integral(annulus, field.values, outer)
        inner_period = loop_integral(annulus, field.values, inner)
        assert abs(outer_period) > 0.1
        assert outer_period + inner_period == pytest.approx(0.0, abs=1e-8 * abs(outer_period))

    def test_torus_period_matrix_has_full_rank(self):
        """Should pair harmonic fields and generators through a rank 2 matrix."""
        torus = build_operators(torus_mesh(nx=6, ny=6))
        basis = harmonic_basis(laplacian(torus, 1, ABSOLUTE_NEUMANN))
        loops = generator_loops(torus.mesh)
        periods = np.array(
            [[loop_integral(torus, field.values, loop) for loop in loops] for field in basis]
        )
        assert periods.shape == (2, 2)
        assert np.linalg.matrix_rank(periods, tol=1e-8) == 2


class TestProjectionAlgebra:
    """P_i P_j = delta_ij P_i on random inputs."""

    @pytest.fixture(
        scope="class",
        params=[
            lambda: disk_mesh(rings=3, sectors=6),
            lambda: annulus_mesh(rings=2, sectors=12),
            lambda: torus_mesh(nx=4, ny=4),
        ],
        ids=["disk", "annulus", "torus"],
    )
    def bundle(self, request):
        return build_operators(request.param())

    @pytest.mark.parametrize("seed", range(50))
    def test_projections_compose_as_an_orthogonal_family(self, bundle, seed):
        """Should fix each part under its own projection and kill it under the others."""
        omega = make_random(bundle, seed=100 + seed)
        scale = bundle.norm(1, omega)
        parts = projections(bundle, Cochain(1, omega))
        for i, part in enumerate(parts):
            again = projections(bundle, Cochain(1, part))
            for j, image in enumerate(again):
                expected = part if i == j else np.zeros_like(part)
                assert bundle.norm(1, image - expected) < 1e-8 * scale
