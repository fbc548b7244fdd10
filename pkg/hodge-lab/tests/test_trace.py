"""
Unit tests for FlowTrace persistence and trace generation.
"""

import numpy as np
import pytest

from backend.app.core.dec import build_operators
from backend.app.core.euler import rigid_rotation
from backend.app.core.heat import spectral_decompose
from backend.app.core.hodge import ABSOLUTE_NEUMANN, laplacian
from backend.app.core.mesh import disk_mesh
from backend.app.core.trace import FlowTrace, evolve, load_trace, save_trace, synthetic_trace
from backend.app.models import LedgerRow


@pytest.fixture(scope="module")
def disk():
    bundle = build_operators(disk_mesh(rings=3, sectors=6))
    return bundle, spectral_decompose(laplacian(bundle, 1, ABSOLUTE_NEUMANN))


def make_trace(n_fields: int = 3, n_edges: int = 5) -> FlowTrace:
    rng = np.random.default_rng(0)
    return FlowTrace(
        times=np.arange(n_fields) * 0.1,
        fields=[rng.standard_normal(n_edges) for _ in range(n_fields)],
        ledger=[
            LedgerRow(
                t0=0.1,
                eps=0.01,
                energy_pairing=1e-3,
                commutator_pairing=-2e-4,
                A_sup=0.5,
                weak_residual=1e-6,
            )
        ],
        meta={"kind": "test"},
    )


class TestFlowTrace:
    """Validation and append-only growth."""

    def test_length_mismatch_raises(self):
        """Should need one field per time."""
        with pytest.raises(ValueError, match="one field per time"):
            FlowTrace(times=[0.0, 1.0], fields=[np.zeros(3)])

    def test_decreasing_times_raise(self):
        """Should need increasing times."""
        with pytest.raises(ValueError, match="times must increase"):
            FlowTrace(times=[1.0, 0.5], fields=[np.zeros(3), np.zeros(3)])

    def test_mixed_shapes_raise(self):
        """Should need every field on the same edges."""
        with pytest.raises(ValueError, match="same edges"):
            FlowTrace(times=[0.0, 1.0], fields=[np.zeros(3), np.zeros(4)])

    def test_append(self):
        """Should append a later snapshot."""
        trace = make_trace()
        trace.append(0.5, np.ones(5))
        assert len(trace.fields) == 4
        assert trace.times[-1] == 0.5

    def test_append_in_the_past_raises(self):
        """Should refuse a snapshot before the last time."""
        trace = make_trace()
        with pytest.raises(ValueError, match="must exceed the last time"):
            trace.append(0.1, np.ones(5))

    def test_append_on_other_edges_raises(self):
        """Should refuse a snapshot on other edges."""
        trace = make_trace()
        with pytest.raises(ValueError, match="different edges"):
            trace.append(1.0, np.ones(6))


class TestPersistence:
    def test_save_and_load_keep_everything(self, tmp_path):
        """Should keep times, fields, ledger and meta on disk."""
        trace = make_trace()
        root = save_trace(trace, tmp_path / "trace")
        assert (root / "meta.json").exists()
        assert (root / "fields" / "field_0002.csv").exists()

        loaded = load_trace(root)
        np.testing.assert_array_equal(loaded.times, trace.times)
        for original, restored in zip(trace.fields, loaded.fields):
            np.testing.assert_array_equal(restored, original)
        assert loaded.ledger == trace.ledger
        assert loaded.meta == {"kind": "test"}

    def test_empty_ledger_round_trips(self, tmp_path):
        """Should keep an empty ledger empty."""
        trace = FlowTrace(times=[0.0, 0.1], fields=[np.zeros(2), np.ones(2)])
        loaded = load_trace(save_trace(trace, tmp_path / "bare"))
        assert loaded.ledger == []

    def test_missing_directory_raises(self, tmp_path):
        """Should refuse a missing directory."""
        with pytest.raises(ValueError, match="cannot load trace"):
            load_trace(tmp_path / "nowhere")

    def test_missing_snapshot_raises(self, tmp_path):
        """Should refuse a trace with a missing snapshot."""
        root = save_trace(make_trace(), tmp_path / "trace")
        (root / "fields" / "field_0001.csv").unlink()
        with pytest.raises(ValueError, match="cannot load trace"):
            load_trace(root)


class TestGeneration:
    """Synthetic and evolved traces."""

    def test_synthetic_trace_is_divergence_free(self, disk):
        """Should make normalized divergence-free snapshots."""
        bundle, cache = disk
        trace = synthetic_trace(bundle, cache, [0.0, 0.1, 0.2], alpha=0.25, seed=3)
        assert trace.meta["kind"] == "synthetic"
        assert bundle.norm(1, trace.fields[0]) == pytest.approx(1.0)
        for V in trace.fields:
            assert bundle.norm(0, bundle.codifferential(1, V)) < 1e-8

    def test_synthetic_trace_is_seeded(self, disk):
        """Should repeat a synthetic trace for the same seed."""
        bundle, cache = disk
        first = synthetic_trace(bundle, cache, [0.0, 0.1], seed=5)
        second = synthetic_trace(bundle, cache, [0.0, 0.1], seed=5)
        np.testing.assert_array_equal(first.fields[1], second.fields[1])

    def test_evolve_counts_snapshots(self, disk):
        """Should store one snapshot per step."""
        bundle, _ = disk
        trace = evolve(bundle, rigid_rotation(bundle.mesh), 0.02, 3)
        np.testing.assert_allclose(trace.times, [0.0, 0.02, 0.04, 0.06])
        assert trace.meta == {"kind": "evolved", "dt": 0.02, "scheme": "RK4", "steps": 3}

    def test_evolve_needs_a_step(self, disk):
        """Should need at least one step."""
        bundle, _ = disk
        with pytest.raises(ValueError, match="steps must be at least 1"):
            evolve(bundle, rigid_rotation(bundle.mesh), 0.02, 0)
