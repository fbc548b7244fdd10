"""
Pydantic data models for hodge-lab.

These models define:
- The structure of a run configuration (mesh, grids, tolerances, outputs)
- The rows written to reports (norms, ledger, mesh summary, checks)

They are used by the loader for validation and by the CLI for
deterministic serialization.
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .core.mesh import MESH_KINDS


def _positive_grid(values: List[float]) -> List[float]:
    if not values:
        raise ValueError("grid must not be empty")
    if any(v <= 0 for v in values):
        raise ValueError("grid values must be positive")
    return values


class MeshSpec(BaseModel):
    """A generated mesh (kind + params) or an OFF file."""

    kind: Optional[str] = Field(
        None,
        description="Generator name: disk, annulus, rectangle, torus or sphere"
    )

    params: Dict[str, float] = Field(
        default_factory=dict,
        description="Generator parameters such as rings, sectors, nx, ny, subdiv"
    )

    off_path: Optional[str] = Field(
        None,
        description="Path to an ASCII OFF file, relative to the config file"
    )

    period: Optional[List[float]] = Field(
        None,
        description="Torus period (Lx, Ly) for OFF meshes exported from a flat torus"
    )

    @model_validator(mode="after")
    def _one_source(self) -> "MeshSpec":
        if (self.kind is None) == (self.off_path is None):
            raise ValueError("mesh needs exactly one of kind or off_path")
        if self.kind is not None and self.kind not in MESH_KINDS:
            raise ValueError(f"unknown mesh kind {self.kind!r}")
        if self.period is not None and len(self.period) != 2:
            raise ValueError("period must have two entries")
        return self


class HeatSettings(BaseModel):
    degree: int = Field(1, ge=0, le=2, description="Cochain degree of the sweep")

    profile: Literal["octave", "white"] = Field(
        "octave",
        description="Spectral profile of the rough initial data"
    )

    m_values: List[float] = Field(
        default_factory=lambda: [1.0, 2.0],
        description="Derivative orders whose smoothing slopes are fitted"
    )

    points: int = Field(8, ge=4, description="Number of log-spaced fit times")


class OnsagerSettings(BaseModel):
    trace: Literal["rigid", "vortex", "synthetic"] = Field(
        "vortex",
        description="Evolved exact flow (rigid rotation or r^2 vortex) or spectrally synthesized rough trace"
    )

    dt: float = Field(0.02, gt=0, description="Time step of the trace")

    steps: int = Field(16, ge=4, description="Number of time steps")

    alpha: float = Field(0.25, ge=0, description="Spectral decay of the synthetic trace")

    refine: bool = Field(
        True,
        description="Also run at halved (h, dt) and report the ledger reduction"
    )


class BesovSettings(BaseModel):
    grid_n: int = Field(33, ge=9, description="Grid points per side on [0, 1]^2")

    s: float = Field(1.0 / 3.0, gt=0, description="Smoothness index")

    p: float = Field(3.0, ge=1, description="Integrability index")

    q: float = Field(1.0, ge=1, description="Scale summability index")

    m: int = Field(1, ge=1, le=3, description="Order of the finite differences")

    functions: List[str] = Field(
        default_factory=lambda: ["constant", "x", "xy", "sin", "gaussian"],
        description="Named closed-form grid functions"
    )

    product_n: int = Field(65, ge=17, description="Grid size of the product-estimate suite")

    product_bound: float = Field(50.0, gt=0, description="Regression bound on the max ratio")


class RunConfig(BaseModel):
    """Resolved configuration of one CLI run."""

    mesh: MeshSpec

    experiment: str = Field("default", min_length=1, description="Free-form run label")

    field: Literal["random", "exact", "harmonic", "rotation"] = Field(
        "random",
        description="Input 1-cochain of the decompose command"
    )

    t_grid: List[float] = Field(..., description="Heat times")

    s_grid: List[float] = Field(..., description="Commutator scales")

    eps_list: List[float] = Field(..., description="Mollification scales of the ledger")

    r_list: List[float] = Field(..., description="Strip widths")

    tolerances: Dict[str, float] = Field(
        default_factory=dict,
        description="Named acceptance tolerances"
    )

    seed: int = Field(0, ge=0, description="Seed of every random draw")

    modes: int = Field(64, ge=2, description="Spectral truncation for large meshes")

    out_dir: str = Field("out", min_length=1, description="Directory receiving reports")

    format: Literal["csv", "json"] = Field("csv", description="Report format")

    heat: HeatSettings = Field(default_factory=HeatSettings)

    onsager: OnsagerSettings = Field(default_factory=OnsagerSettings)

    besov: BesovSettings = Field(default_factory=BesovSettings)

    @field_validator("t_grid", "s_grid", "eps_list", "r_list")
    @classmethod
    def _grids_positive(cls, values: List[float]) -> List[float]:
        return _positive_grid(values)

    @field_validator("tolerances")
    @classmethod
    def _tolerances_positive(cls, values: Dict[str, float]) -> Dict[str, float]:
        bad = [name for name, value in values.items() if value <= 0]
        if bad:
            raise ValueError(f"tolerances must be positive: {bad}")
        return values


class NormReport(BaseModel):
    """One norm evaluation with the parameters it was taken at."""

    value: float = Field(..., ge=0, description="Norm value")

    p: float = Field(..., ge=1, description="Integrability index (inf allowed)")

    q: Optional[float] = Field(None, ge=1, description="Scale summability index")

    s: Optional[float] = Field(None, description="Smoothness index")

    m: Optional[int] = Field(None, description="Difference order or derivative order")

    method: Literal["mass", "quadrature", "bmd", "spectral"] = Field(
        ...,
        description="How the value was computed"
    )

    components: Dict[str, float] = Field(
        default_factory=dict,
        description="Named parts of the value, e.g. lp and seminorm"
    )


class LedgerRow(BaseModel):
    """One row of the energy ledger."""

    t0: float = Field(..., description="Center of the time cutoff")

    eps: float = Field(..., gt=0, description="Mollification scale")

    energy_pairing: float = Field(..., description="int eta' <<V^eps, V^eps>> dt")

    commutator_pairing: float = Field(..., description="int eta <<W(eps), U^eps>> dt")

    A_sup: float = Field(..., ge=0, description="sup over the trace of A(t, eps)")

    weak_residual: float = Field(..., ge=0, description="Weak-form residual of the trace")


class MeshInfo(BaseModel):
    kind: str
    vertices: int = Field(..., gt=0)
    edges: int = Field(..., gt=0)
    triangles: int = Field(..., gt=0)
    euler_characteristic: int
    boundary_loops: int = Field(..., ge=0)
    h: float = Field(..., gt=0, description="Longest edge")
    area: float = Field(..., gt=0)
    dual_kind: str


class CheckResult(BaseModel):
    """A measured value against its acceptance tolerance."""

    name: str = Field(..., min_length=1)

    value: float

    tolerance: float

    passed: bool
