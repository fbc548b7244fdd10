"""
Unit tests for the cochain complex, Hodge stars and Whitney maps.
"""

import numpy as np
import pytest

from backend.app.core.dec import (
    ABSOLUTE,
    RELATIVE,
    Cochain,
    build_operators,
    by_parts_defect,
    flat_field,
    inner_product,
    loop_integral,
    normal_flux,
    simplicial_betti,
    whitney_flat,
    whitney_gradient,
    whitney_sharp,
)
from backend.app.core.mesh import (
    annulus_mesh,
    disk_mesh,
    generator_loops,
    sphere_mesh,
    torus_mesh,
)


def make_bundle(kind: str = "disk"):
    meshes = {
        "disk": lambda: disk_mesh(rings=4, sectors=6),
        "annulus": lambda: annulus_mesh(rings=3, sectors=24),
        "torus": lambda: torus_mesh(nx=6, ny=6, width=2.0, height=3.0),
        "sphere": lambda: sphere_mesh(subdiv=1),
    }
    return build_operators(meshes[kind]())


def constant_field(points: np.ndarray) -> np.ndarray:
    return np.tile([0.3, -1.2], (len(points), 1))


class TestCochain:
    """Tagged cochain arithmetic."""

    def test_arithmetic_keeps_tags(self):
        """Should keep degree and complex through arithmetic."""
        a = Cochain(1, [1.0, 2.0])
        b = Cochain(1, [0.5, 0.5])
        total = 2.0 * (a - b) + (-b)
        assert total.degree == 1
        np.testing.assert_allclose(total.values, [0.5, 2.5])

    def test_mismatched_degree_raises(self):
        """Should refuse to add cochains of different degree."""
        with pytest.raises(ValueError, match="mismatched cochains"):
            Cochain(1, [1.0, 2.0]) + Cochain(0, [1.0, 2.0])

    def test_mismatched_complex_raises(self):
        """Should refuse to add absolute and relative cochains."""
        with pytest.raises(ValueError, match="mismatched cochains"):
            Cochain(1, [1.0]) + Cochain(1, [1.0], RELATIVE)

    def test_invalid_degree_raises(self):
        """Should reject degrees outside 0, 1, 2."""
        with pytest.raises(ValueError, match="degree must be 0, 1 or 2"):
            Cochain(3, [1.0])

    def test_bundle_checks_length(self):
        """Should check the simplex count when wrapping values."""
        bundle = make_bundle()
        with pytest.raises(ValueError, match="1-cochain needs"):
            bundle.cochain(1, np.zeros(3))


class TestComplex:
    """d d = 0, adjointness and homology."""

    @pytest.mark.parametrize("kind", ["disk", "annulus", "torus", "sphere"])
    def test_d_squared_vanishes(self, kind):
        """Should give d d = 0 on the absolute complex."""
        bundle = make_bundle(kind)
        product = bundle.d[1] @ bundle.d[0]
        assert abs(product).max() == 0.0

    def test_relative_d_squared_vanishes(self):
        """Should give d d = 0 on the relative complex."""
        bundle = make_bundle("annulus")
        product = bundle.d_rel[1] @ bundle.d_rel[0]
        assert product.nnz == 0 or abs(product).max() == 0.0

    @pytest.mark.parametrize("complex", [ABSOLUTE, RELATIVE])
    def test_codifferential_is_adjoint(self, complex):
        """Should make the codifferential the mass adjoint of d."""
        bundle = make_bundle("annulus")
        rng = np.random.default_rng(1)
        for k in (0, 1):
            a = rng.standard_normal(bundle.size(k, complex))
            b = rng.standard_normal(bundle.size(k + 1, complex))
            lhs = bundle.inner(k + 1, bundle.exterior(k, a, complex), b, complex)
            rhs = bundle.inner(k, a, bundle.codifferential(k + 1, b, complex), complex)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_inner_product_on_cochains(self):
        """Should give the area as the squared norm of the constant 0-cochain."""
        bundle = make_bundle()
        ones = Cochain(0, np.ones(bundle.size(0)))
        assert inner_product(bundle, ones, ones) == pytest.approx(
            bundle.mesh.areas.sum()
        )

    @pytest.mark.parametrize(
        "kind, absolute, relative",
        [
            ("disk", (1, 0, 0), (0, 0, 1)),
            ("annulus", (1, 1, 0), (0, 1, 1)),
            ("torus", (1, 2, 1), (1, 2, 1)),
            ("sphere", (1, 0, 1), (1, 0, 1)),
        ],
    )
    def test_simplicial_betti(self, kind, absolute, relative):
        """Should count Betti numbers from ranks."""
        bundle = make_bundle(kind)
        assert simplicial_betti(bundle, ABSOLUTE) == absolute
        assert simplicial_betti(bundle, RELATIVE) == relative

    def test_restrict_extend(self):
        """Should invert restriction by zero extension on interior simplices."""
        bundle = make_bundle("annulus")
        values = np.arange(bundle.size(1), dtype=float)
        extended = bundle.extend(1, bundle.restrict(1, values))
        assert np.all(extended[bundle.mesh.boundary_edges] == 0.0)
        np.testing.assert_array_equal(
            extended[bundle.mesh.interior_edges], values[bundle.mesh.interior_edges]
        )


class TestWhitney:
    """Sharp and flat between 1-cochains and per-triangle fields."""

    def test_sharp_reproduces_constant_fields(self):
        """Should reconstruct a constant field exactly."""
        bundle = make_bundle()
        omega = flat_field(bundle.mesh, constant_field)
        field = whitney_sharp(bundle, omega)
        np.testing.assert_allclose(field[:, :2], np.tile([0.3, -1.2], (len(field), 1)), atol=1e-12)
        np.testing.assert_allclose(field[:, 2], 0.0, atol=1e-12)

    def test_flat_of_sharp_is_identity_on_constant_fields(self):
        """Should return a constant field's cochain after sharp then flat."""
        bundle = make_bundle("annulus")
        omega = flat_field(bundle.mesh, constant_field)
        np.testing.assert_allclose(
            whitney_flat(bundle, whitney_sharp(bundle, omega)), omega, atol=1e-12
        )

    def test_exact_forms_have_zero_gradient(self):
        """Should give exact forms a zero Whitney gradient."""
        bundle = make_bundle()
        f = np.random.default_rng(2).standard_normal(bundle.size(0))
        gradient = whitney_gradient(bundle, bundle.exterior(0, f))
        assert np.abs(gradient).max() < 1e-10

    def test_flat_shape_guard(self):
        """Should reject a field with the wrong shape."""
        bundle = make_bundle()
        with pytest.raises(ValueError, match="field must have shape"):
            whitney_flat(bundle, np.zeros((3, 3)))

    def test_flat_field_is_exact_for_linear_fields(self):
        """Should integrate linear fields exactly along edges."""
        bundle = make_bundle()
        mesh = bundle.mesh
        omega = flat_field(mesh, lambda p: p[:, :2])
        expected = 0.5 * np.sum(mesh.vertices**2, axis=1)
        np.testing.assert_allclose(omega, bundle.exterior(0, expected), atol=1e-12)


class TestBoundaryCalculus:
    """Fluxes, loop integrals and integration by parts."""

    def test_constant_field_has_zero_total_flux(self):
        """Should give a constant field zero net boundary flux."""
        bundle = make_bundle("annulus")
        field = np.tile([1.0, 2.0, 0.0], (bundle.mesh.n_triangles, 1))
        flux = normal_flux(bundle, field)
        lengths = bundle.mesh.edge_lengths[bundle.mesh.boundary_edges]
        assert np.dot(flux, lengths) == pytest.approx(0.0, abs=1e-12)

    def test_exact_form_has_zero_periods(self):
        """Should give exact forms zero loop integrals."""
        bundle = make_bundle("torus")
        f = np.random.default_rng(3).standard_normal(bundle.size(0))
        for loop in generator_loops(bundle.mesh):
            assert loop_integral(bundle, bundle.exterior(0, f), loop) == pytest.approx(
                0.0, abs=1e-12
            )

    def test_constant_field_periods_are_the_torus_sides(self):
        """Should measure the torus sides with a constant field."""
        bundle = make_bundle("torus")
        horizontal, vertical = generator_loops(bundle.mesh)
        dx = flat_field(bundle.mesh, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
        dy = flat_field(bundle.mesh, lambda p: np.tile([0.0, 1.0], (len(p), 1)))
        assert abs(loop_integral(bundle, dx, horizontal)) == pytest.approx(2.0)
        assert abs(loop_integral(bundle, dy, vertical)) == pytest.approx(3.0)

    def test_by_parts_defect_shrinks_under_refinement(self):
        """Should shrink the integration by parts defect under refinement."""
        def field(p: np.ndarray) -> np.ndarray:
            return np.stack([1.0 + p[:, 0] * p[:, 1], np.sin(p[:, 0])], axis=1)

        defects = []
        for rings in (4, 8):
            bundle = build_operators(disk_mesh(rings=rings, sectors=6))
            x, y = bundle.mesh.vertices[:, 0], bundle.mesh.vertices[:, 1]
            defects.append(by_parts_defect(bundle, 1.0 + x**2 + y, field))
        assert defects[1] < defects[0]
