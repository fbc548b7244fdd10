"""
Unit tests for mesh construction, OFF files and boundary strips.
"""

import numpy as np
import pytest

from backend.app.core.mesh import (
    CUTOFF_CONSTANT,
    SimplicialManifold,
    annulus_mesh,
    boundary_loops,
    cutoff_profile,
    disk_mesh,
    distance_to_boundary,
    euler_characteristic,
    generate_mesh,
    load_off,
    mesh_size,
    perimeter,
    rectangle_mesh,
    sphere_mesh,
    strip_area,
    strip_cutoff,
    strip_fractions,
    to_off,
    torus_mesh,
)


def make_square(flip_second: bool = False) -> SimplicialManifold:
    """Unit square split along its diagonal."""
    vertices = [(0, 0), (1, 0), (1, 1), (0, 1)]
    second = (0, 3, 2) if flip_second else (0, 2, 3)
    return SimplicialManifold(vertices, [(0, 1, 2), second])


class TestValidation:
    """Rejection of inputs that are not oriented 2-manifolds."""

    def test_index_out_of_range_raises(self):
        """Should reject triangle indices past the vertex list."""
        with pytest.raises(ValueError, match="out of range"):
            SimplicialManifold([(0, 0), (1, 0), (0, 1)], [(0, 1, 3)])

    def test_repeated_vertex_raises(self):
        """Should reject a triangle with a repeated vertex."""
        with pytest.raises(ValueError, match="repeats a vertex"):
            SimplicialManifold([(0, 0), (1, 0), (0, 1)], [(0, 1, 1)])

    def test_unused_vertex_raises(self):
        """Should reject vertices no triangle uses."""
        with pytest.raises(ValueError, match="belongs to no triangle"):
            SimplicialManifold([(0, 0), (1, 0), (0, 1), (5, 5)], [(0, 1, 2)])

    def test_non_manifold_edge_raises(self):
        """Should reject an edge shared by three triangles."""
        vertices = [(0, 0), (1, 0), (0, 1), (0, -1), (1, 1)]
        triangles = [(0, 1, 2), (1, 0, 3), (0, 1, 4)]
        with pytest.raises(ValueError, match="non-manifold edge"):
            SimplicialManifold(vertices, triangles)

    def test_inconsistent_orientation_raises(self):
        """Should reject inconsistently oriented triangles."""
        with pytest.raises(ValueError, match="inconsistent triangle orientation"):
            make_square(flip_second=True)

    def test_degenerate_triangle_raises(self):
        """Should reject triangles with zero area."""
        with pytest.raises(ValueError, match="degenerate"):
            SimplicialManifold([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])

    def test_arrays_are_read_only(self):
        """Should freeze its arrays."""
        mesh = make_square()
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 3.0


class TestTopology:
    """Counts, Euler characteristics and boundary loops of the generators."""

    def test_hexagonal_fan(self):
        """Should build the hexagonal fan from one ring."""
        mesh = disk_mesh(rings=1, sectors=6)
        assert (mesh.n_vertices, mesh.n_edges, mesh.n_triangles) == (7, 12, 6)
        assert euler_characteristic(mesh) == 1

    def test_disk_counts(self):
        """Should count the simplices of a two-ring disk."""
        mesh = disk_mesh(rings=2, sectors=6)
        assert mesh.n_vertices == 19
        assert mesh.n_triangles == 24
        assert mesh.n_edges == 42

    def test_disk_has_one_boundary_loop(self):
        """Should find one boundary loop on a disk."""
        mesh = disk_mesh(rings=3, sectors=6)
        loops = boundary_loops(mesh)
        assert len(loops) == 1
        assert len(loops[0]) == 18

    def test_annulus_has_two_loops(self):
        """Should find two boundary loops on an annulus."""
        mesh = annulus_mesh(rings=2, sectors=16)
        assert euler_characteristic(mesh) == 0
        assert sorted(len(loop) for loop in boundary_loops(mesh)) == [16, 16]

    def test_torus_is_closed(self):
        """Should give a torus no boundary."""
        mesh = torus_mesh(nx=6, ny=6)
        assert (mesh.n_vertices, mesh.n_edges, mesh.n_triangles) == (36, 108, 72)
        assert euler_characteristic(mesh) == 0
        assert not mesh.has_boundary
        assert boundary_loops(mesh) == []

    def test_sphere_counts(self):
        """Should count the simplices of an icosphere with chi = 2."""
        mesh = sphere_mesh(subdiv=1)
        assert mesh.n_triangles == 80
        assert mesh.n_vertices == 42
        assert euler_characteristic(mesh) == 2
        assert not mesh.is_planar

    def test_rectangle_is_a_disk(self):
        """Should make a rectangle topologically a disk."""
        mesh = rectangle_mesh(nx=4, ny=4)
        assert euler_characteristic(mesh) == 1
        assert mesh.areas.sum() == pytest.approx(1.0)

    def test_boundary_loop_keeps_interior_to_the_left(self):
        """Should walk boundary loops counter-clockwise."""
        mesh = disk_mesh(rings=2, sectors=6)
        loop = boundary_loops(mesh)[0]
        points = mesh.vertices[loop, :2]
        x, y = points[:, 0], points[:, 1]
        signed_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert signed_area > 0


class TestGeometry:
    """Areas, sizes and dual measures."""

    def test_disk_perimeter_is_the_inscribed_polygon(self):
        """Should measure the inscribed polygon as the disk perimeter."""
        mesh = disk_mesh(rings=3, sectors=6)
        n = 18
        assert perimeter(mesh) == pytest.approx(2 * n * np.sin(np.pi / n))

    def test_mesh_size_is_longest_edge(self):
        """Should use the longest edge as mesh size."""
        mesh = rectangle_mesh(nx=2, ny=2)
        assert mesh_size(mesh) == pytest.approx(mesh.edge_lengths.max())

    def test_torus_uses_circumcentric_dual(self):
        """Should pick the circumcentric dual on the torus."""
        mesh = torus_mesh(nx=8, ny=8)
        assert mesh.dual_kind == "circumcentric"
        assert mesh.star0.sum() == pytest.approx(1.0)

    def test_dual_vertex_measures_sum_to_area(self):
        """Should make the dual vertex measures sum to the area."""
        mesh = annulus_mesh(rings=4, sectors=24)
        assert mesh.star0.sum() == pytest.approx(mesh.areas.sum())

    def test_edge_index_orientation(self):
        """Should sign edges by their stored orientation."""
        mesh = make_square()
        edge, sign = mesh.edge_index(1, 0)
        assert tuple(mesh.edges[edge]) == (0, 1)
        assert sign == -1

    def test_edge_index_missing_raises(self):
        """Should refuse a vertex pair that is not an edge."""
        mesh = make_square()
        with pytest.raises(ValueError, match="not joined"):
            mesh.edge_index(1, 3)


class TestGenerators:
    def test_unknown_kind_raises(self):
        """Should reject an unknown mesh kind."""
        with pytest.raises(ValueError, match="Unknown mesh kind"):
            generate_mesh("klein_bottle")

    def test_unknown_parameter_raises(self):
        """Should reject an unknown generator parameter."""
        with pytest.raises(ValueError, match="Invalid parameters"):
            generate_mesh("disk", spokes=3)

    def test_too_few_sectors_raises(self):
        """Should need at least three sectors."""
        with pytest.raises(ValueError, match="sectors must be at least 3"):
            generate_mesh("disk", rings=2, sectors=2)

    def test_odd_torus_rows_raise(self):
        """Should need an even number of torus rows."""
        with pytest.raises(ValueError, match="ny must be even"):
            torus_mesh(nx=6, ny=5)

    def test_meta_records_parameters(self):
        """Should record the generator parameters in meta."""
        mesh = generate_mesh("annulus", rings=3, sectors=20)
        assert mesh.meta["kind"] == "annulus"
        assert mesh.meta["sectors"] == 20


class TestOff:
    """ASCII OFF import and export."""

    def test_round_trip_keeps_geometry(self):
        """Should keep the geometry through an OFF export and import."""
        mesh = disk_mesh(rings=3, sectors=6)
        loaded = load_off(to_off(mesh))
        assert loaded.n_edges == mesh.n_edges
        assert loaded.areas.sum() == pytest.approx(mesh.areas.sum(), rel=1e-12)

    def test_torus_round_trip_with_period(self):
        """Should keep a torus through OFF when the period is given."""
        mesh = torus_mesh(nx=6, ny=6, width=2.0, height=3.0)
        loaded = load_off(to_off(mesh), period=(2.0, 3.0))
        assert loaded.areas.sum() == pytest.approx(6.0)
        assert euler_characteristic(loaded) == 0

    def test_inconsistent_faces_are_reoriented(self):
        """Should flip faces into a consistent orientation."""
        text = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 3 2\n"
        mesh = load_off(text)
        assert mesh.n_triangles == 2
        assert mesh.areas.sum() == pytest.approx(1.0)

    def test_missing_header_raises(self):
        """Should need the OFF header."""
        with pytest.raises(ValueError, match="missing OFF header"):
            load_off("4 2 0\n")

    def test_count_mismatch_raises(self):
        """Should reject a record count that disagrees with the header."""
        text = "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        with pytest.raises(ValueError, match="count mismatch"):
            load_off(text)

    def test_quad_face_raises(self):
        """Should reject quadrilateral faces."""
        text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
        with pytest.raises(ValueError, match="only triangular faces"):
            load_off(text)

    def test_non_manifold_raises(self):
        """Should reject non-manifold input."""
        text = (
            "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n1 1 0\n"
            "3 0 1 2\n3 1 0 3\n3 0 1 4\n"
        )
        with pytest.raises(ValueError, match="non-manifold"):
            load_off(text)


class TestStrips:
    """Boundary distance, cutoffs and strip areas."""

    @pytest.fixture(scope="class")
    def disk(self):
        return disk_mesh(rings=8, sectors=6)

    def test_boundary_distance_is_zero_on_boundary(self, disk):
        """Should put boundary vertices at distance 0."""
        dist = distance_to_boundary(disk)
        assert np.all(dist[disk.boundary_vertices] == 0.0)
        assert dist[0] == pytest.approx(1.0)

    def test_no_boundary_gives_infinite_distance(self):
        """Should give infinite distances without a boundary."""
        assert np.all(np.isinf(distance_to_boundary(torus_mesh(nx=4, ny=4))))

    @pytest.mark.parametrize(
        "mesh",
        [disk_mesh(rings=6, sectors=6), annulus_mesh(rings=4, sectors=24)],
        ids=["disk", "annulus"],
    )
    def test_distance_is_lipschitz_along_edges(self, mesh):
        """Should change by at most the edge length across every edge."""
        dist = distance_to_boundary(mesh)
        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
        assert np.all(np.abs(dist[a] - dist[b]) <= mesh.edge_lengths * (1 + 1e-12))

    def test_cutoff_profile_plateaus(self):
        """Should be 1 up to r/2 and 0 from 3r/4."""
        values = cutoff_profile(np.array([0.0, 0.05, 0.075, 0.2]), r=0.1)
        np.testing.assert_allclose(values, [1.0, 1.0, 0.0, 0.0], atol=1e-15)

    def test_cutoff_slope_bound(self, disk):
        """Should keep the cutoff slope below 7.5 / r."""
        cutoff = strip_cutoff(disk, 0.5)
        assert np.all(cutoff.psi[disk.boundary_vertices] == 1.0)
        assert cutoff.grad_bound * cutoff.r <= CUTOFF_CONSTANT

    def test_cutoff_width_out_of_range_raises(self, disk):
        """Should reject widths past the largest distance."""
        with pytest.raises(ValueError, match="r must lie in"):
            strip_cutoff(disk, 5.0)

    def test_cutoff_without_boundary_raises(self):
        """Should need a boundary for a cutoff."""
        with pytest.raises(ValueError, match="needs a mesh with boundary"):
            strip_cutoff(torus_mesh(nx=4, ny=4), 0.1)

    def test_strip_fractions_lie_in_unit_interval(self, disk):
        """Should keep strip fractions in [0, 1]."""
        fractions = strip_fractions(disk, distance_to_boundary(disk), 0.3)
        assert np.all((fractions >= 0.0) & (fractions <= 1.0))

    def test_full_strip_covers_the_mesh(self, disk):
        """Should cover the mesh with a wide enough strip."""
        dist = distance_to_boundary(disk)
        assert strip_area(disk, dist, 2.0) == pytest.approx(disk.areas.sum())

    def test_strip_area_grows_with_width(self, disk):
        """Should grow the strip area with the width."""
        dist = distance_to_boundary(disk)
        assert strip_area(disk, dist, 0.1) < strip_area(disk, dist, 0.2)
