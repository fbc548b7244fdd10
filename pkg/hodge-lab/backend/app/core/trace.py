"""
FlowTrace: time series of 1-cochains with their ledger, persisted as a
directory of meta.json, one CSV per snapshot and ledger.csv.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from ..models import LedgerRow
from .dec import OperatorBundle
from .euler import galerkin_step
from .heat import SpectralCache
from .hodge import leray_project

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


@dataclass
class FlowTrace:
    """Snapshots V(t_i) on one mesh; append-only while generated."""

    times: np.ndarray
    fields: List[np.ndarray]
    ledger: List[LedgerRow] = field(default_factory=list)
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = [np.asarray(v, dtype=float) for v in self.fields]
        # ---- Guard clauses ----
        if len(self.times) != len(self.fields):
            raise ValueError("one field per time is required")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must increase")
        if len({v.shape for v in self.fields}) > 1:
            raise ValueError("all snapshots must live on the same edges")

    def append(self, t: float, V: np.ndarray) -> None:
        if len(self.times) and t <= self.times[-1]:
            raise ValueError("appended time must exceed the last time")
        V = np.asarray(V, dtype=float)
        if self.fields and V.shape != self.fields[0].shape:
            raise ValueError("appended field lives on different edges")
        self.times = np.append(self.times, float(t))
        self.fields.append(V)

    def save(self, directory: str) -> Path:
        """Write meta.json, fields/field_XXXX.csv and ledger.csv."""
        root = Path(directory)
        (root / "fields").mkdir(parents=True, exist_ok=True)
        meta = dict(self.meta)
        meta["times"] = [float(t) for t in self.times]
        (root / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))
        for index, V in enumerate(self.fields):
            frame = pd.DataFrame({"edge": np.arange(len(V)), "value": V})
            frame.to_csv(root / "fields" / f"field_{index:04d}.csv", index=False, float_format=FLOAT_FORMAT)
        ledger = pd.DataFrame(
            [row.model_dump() for row in self.ledger],
            columns=list(LedgerRow.model_fields),
        )
        ledger.to_csv(root / "ledger.csv", index=False, float_format=FLOAT_FORMAT)
        logger.info("Saved trace with %d snapshots to %s", len(self.fields), root)
        return root

    @classmethod
    def load(cls, directory: str) -> "FlowTrace":
        """
        Read a trace written by save.

        Raises:
            ValueError: If files are missing or inconsistent.
        """
        root = Path(directory)
        try:
            meta = json.loads((root / "meta.json").read_text())
            times = meta.pop("times")
            fields = [
                pd.read_csv(root / "fields" / f"field_{index:04d}.csv")["value"].to_numpy()
                for index in range(len(times))
            ]
            frame = pd.read_csv(root / "ledger.csv")
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            logger.exception("Trace directory %s is unreadable", root)
            raise ValueError(f"cannot load trace from {root}") from exc
        ledger = [LedgerRow(**record) for record in frame.to_dict(orient="records")]
        return cls(times=np.array(times), fields=fields, ledger=ledger, meta=meta)


def synthetic_trace(
    bundle: OperatorBundle,
    cache: SpectralCache,
    times: Sequence[float],
    alpha: float = 0.25,
    seed: int = 0,
) -> FlowTrace:
    """
    Rough divergence-free trace P(sum lambda^-alpha cos(w_i t + theta_i) phi_i).

    w_i = sqrt(lambda_i) and theta_i are uniform random phases.
    """
    if cache.degree != 1:
        raise ValueError("synthetic traces are 1-cochains")
    rng = np.random.default_rng(seed)
    h = cache.n_harmonic
    lam = cache.eigenvalues[h:]
    modes = cache.eigenfields[:, h:]
    amplitude = lam**-alpha
    frequency = np.sqrt(lam)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=lam.size)

    fields = []
    for t in times:
        V = modes @ (amplitude * np.cos(frequency * t + phase))
        fields.append(leray_project(bundle, V))
    scale = np.sqrt(np.sum(cache.mass * fields[0] ** 2))
    fields = [V / scale for V in fields]
    meta = {"kind": "synthetic", "alpha": alpha, "seed": seed}
    return FlowTrace(times=np.asarray(times, dtype=float), fields=fields, meta=meta)


def evolve(bundle: OperatorBundle, V0: np.ndarray, dt: float, steps: int) -> FlowTrace:
    """Trace of `steps` RK4 Galerkin steps starting from V0 at t = 0."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    trace = FlowTrace(
        times=np.array([0.0]),
        fields=[np.asarray(V0, dtype=float)],
        meta={"kind": "evolved", "dt": dt, "scheme": "RK4", "steps": steps},
    )
    V = trace.fields[0]
    for step in range(1, steps + 1):
        V = galerkin_step(bundle, V, dt)
        trace.append(step * dt, V)
    return trace


def save_trace(trace: FlowTrace, directory: str) -> Path:
    return trace.save(directory)


def load_trace(directory: str) -> FlowTrace:
    return FlowTrace.load(directory)
