"""
Ball-mean-difference (BMD) Besov norms on square grids and the
product-estimate harness.

The seminorm at dyadic scale t = 2^-j averages |Delta_h^m f(x)| over the
admissible offsets h (|h| <= t, every difference node inside the domain),
takes the L^p norm in x, weights it by t^-s and combines scales with the
l^q norm over j.

Design principles:
- Grids cover [0, L]^2 with n points per side; the spacing is L / (n - 1)
- Scales stop at 4 * spacing; smaller ones carry no information
- bmd_bruteforce is an independent loop over (x, t, h) used as the oracle
- The ball mean divides by pi t^2 / spacing^2, the continuum offset count
"""

import logging
from dataclasses import dataclass
from scipy.special import comb
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ..models import NormReport
from .mesh import cutoff_profile

logger = logging.getLogger(__name__)

MAX_DIFFERENCE_ORDER = 3

NAMED_FUNCTIONS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "constant": lambda x, y: np.ones_like(x),
    "x": lambda x, y: x,
    "y": lambda x, y: y,
    "xy": lambda x, y: x * y,
    "sin": lambda x, y: np.sin(2.0 * np.pi * x) * np.cos(np.pi * y),
    "gaussian": lambda x, y: np.exp(-20.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)),
    "kink": lambda x, y: np.abs(x - 0.5),
}


@dataclass(frozen=True)
class GridFunction:
    """Samples values[i, k] = f(i * spacing, k * spacing)."""

    values: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 2:
            raise ValueError("grid function needs an (n, n) array with n >= 2")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.length / (self.n - 1)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        axis = np.linspace(0.0, self.length, self.n)
        return np.meshgrid(axis, axis, indexing="ij")

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(factor * self.values, self.length)


def make_grid_function(name: str, n: int, length: float = 1.0) -> GridFunction:
    """Sample a named closed form on an n x n grid."""
    if name not in NAMED_FUNCTIONS:
        raise ValueError(f"unknown grid function {name!r}; known: {sorted(NAMED_FUNCTIONS)}")
    axis = np.linspace(0.0, length, n)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    return GridFunction(NAMED_FUNCTIONS[name](x, y), length)


def load_grid_csv(path: str) -> GridFunction:
    """
    Read a grid function from CSV columns x, y, value.

    Raises:
        ValueError: If the samples do not form a full square grid.
    """
    frame = pd.read_csv(path, comment="#")
    missing = {"x", "y", "value"} - set(frame.columns)
    if missing:
        raise ValueError(f"grid CSV lacks columns {sorted(missing)}")
    table = frame.pivot_table(index="x", columns="y", values="value", aggfunc="first")
    if table.isna().any().any() or table.shape[0] != table.shape[1]:
        raise ValueError("grid CSV does not cover a full square grid")
    length = float(table.index.max() - table.index.min())
    return GridFunction(table.to_numpy(), length)


def dyadic_scales(grid: GridFunction) -> np.ndarray:
    """t_j = 2^-j * L for j = 1..J with 2^-J * L >= 4 * spacing."""
    levels = int(np.floor(np.log2(grid.length / (4.0 * grid.spacing))))
    if levels < 1:
        raise ValueError(
            f"grid too coarse: spacing {grid.spacing:.3g} leaves no dyadic scale"
        )
    return grid.length * 2.0 ** -np.arange(1, levels + 1)


def _offsets(grid: GridFunction, t: float) -> np.ndarray:
    reach = int(np.floor(t / grid.spacing + 1e-9))
    a, b = np.meshgrid(np.arange(-reach, reach + 1), np.arange(-reach, reach + 1), indexing="ij")
    a, b = a.ravel(), b.ravel()
    keep = (a**2 + b**2 > 0) & (grid.spacing * np.sqrt(a**2 + b**2) <= t * (1 + 1e-12))
    return np.stack([a[keep], b[keep]], axis=1)


def _lp(values: np.ndarray, weight: float, p: float) -> float:
    if np.isinf(p):
        return float(np.max(np.abs(values)))
    return float((weight * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def _lq(values: np.ndarray, q: float) -> float:
    if np.isinf(q):
        return float(np.max(values))
    return float(np.sum(values**q) ** (1.0 / q))


def _check_indices(s: float, p: float, q: float, m: int) -> None:
    # ---- Guard clauses ----
    if not 1 <= m <= MAX_DIFFERENCE_ORDER:
        raise ValueError(f"difference order m must lie in [1, {MAX_DIFFERENCE_ORDER}]")
    if not 0 < s < m:
        raise ValueError(f"need 0 < s < m, got s={s}, m={m}")
    if not (p >= 1 and q >= 1):
        raise ValueError("p and q must be at least 1")


def ball_mean_difference(grid: GridFunction, t: float, m: int) -> np.ndarray:
    """
    Per-point mean of |Delta_h^m f(x)| over the admissible offsets of scale t.
    """
    f = grid.values
    n = grid.n
    coefficients = [(-1) ** (m - l) * comb(m, l, exact=True) for l in range(m + 1)]
    # spacing^2 / (pi t^2) is one over the lattice count of the ball of radius t
    weight = grid.spacing**2 / (np.pi * t**2)
    total = np.zeros_like(f)
    for a, b in _offsets(grid, t):
        # x + m h must stay inside, which keeps every intermediate node inside
        i0, i1 = max(0, -m * a), min(n, n - m * a)
        k0, k1 = max(0, -m * b), min(n, n - m * b)
        if i0 >= i1 or k0 >= k1:
            continue
        diff = np.zeros((i1 - i0, k1 - k0))
        for l, c in enumerate(coefficients):
            diff += c * f[i0 + l * a : i1 + l * a, k0 + l * b : k1 + l * b]
        total[i0:i1, k0:k1] += weight * np.abs(diff)
    return total


def bmd_besov(
    grid: GridFunction, s: float, p: float, q: float, m: int
) -> NormReport:
    """
    |f|_p + ( sum_j ( t_j^-s | mean_h |Delta_h^m f| |_{L^p_x} )^q )^(1/q).

    Raises:
        ValueError: On inadmissible indices or a grid too coarse for any scale.
    """
    _check_indices(s, p, q, m)
    scales = dyadic_scales(grid)
    area = grid.spacing**2

    lp_part = _lp(grid.values, area, p)
    per_scale = np.array(
        [t**-s * _lp(ball_mean_difference(grid, t, m), area, p) for t in scales]
    )
    seminorm = _lq(per_scale, q)
    logger.debug("BMD n=%d s=%g p=%g q=%g m=%d over %d scales", grid.n, s, p, q, m, len(scales))
    return NormReport(
        value=lp_part + seminorm,
        p=p,
        q=q,
        s=s,
        m=m,
        method="bmd",
        components={"lp": lp_part, "seminorm": seminorm},
    )


def bmd_bruteforce(grid: GridFunction, s: float, p: float, q: float, m: int) -> float:
    """Straight loop evaluation of the same discretized BMD norm (small grids only)."""
    _check_indices(s, p, q, m)
    n, spacing = grid.n, grid.spacing
    f = grid.values
    levels = int(np.floor(np.log2(grid.length / (4.0 * spacing))))
    if levels < 1:
        raise ValueError("grid too coarse")
    reach_all = n

    def inside(i: int, k: int) -> bool:
        return 0 <= i < n and 0 <= k < n

    per_scale = []
    for j in range(1, levels + 1):
        t = grid.length / 2**j
        point_values = []
        for i in range(n):
            for k in range(n):
                acc = 0.0
                for a in range(-reach_all, reach_all + 1):
                    for b in range(-reach_all, reach_all + 1):
                        if a == 0 and b == 0:
                            continue
                        if spacing * np.hypot(a, b) > t * (1 + 1e-12):
                            continue
                        if not all(inside(i + l * a, k + l * b) for l in range(m + 1)):
                            continue
                        diff = sum(
                            (-1) ** (m - l) * comb(m, l, exact=True) * f[i + l * a, k + l * b]
                            for l in range(m + 1)
                        )
                        acc += abs(diff) * spacing**2 / (np.pi * t**2)
                point_values.append(acc)
        inner = np.array(point_values)
        if np.isinf(p):
            norm = float(np.max(inner))
        else:
            norm = float(sum(spacing**2 * v**p for v in inner) ** (1.0 / p))
        per_scale.append(t**-s * norm)

    if np.isinf(p):
        lp_part = float(np.max(np.abs(f)))
    else:
        lp_part = float(sum(spacing**2 * abs(v) ** p for v in f.ravel()) ** (1.0 / p))
    if np.isinf(q):
        seminorm = max(per_scale)
    else:
        seminorm = sum(v**q for v in per_scale) ** (1.0 / q)
    return lp_part + seminorm


# ----------------------------------------------------------------------
# Product estimate
# ----------------------------------------------------------------------


def product_estimate_check(
    n: int,
    r_list: Sequence[float],
    p: float,
    g_samples: Dict[str, GridFunction],
) -> List[Dict[str, float]]:
    """
    Ratio |f_r g|_B / (|f_r|_B_inf |g|_{L^p(y < 4r)} + |f_r|_inf |g|_B) with
    B = B^{1/p}_{p,1}, on a half-space model whose boundary is y = 0.

    f_r is the strip cutoff profile applied to y.

    Returns:
        Rows with r, g, lhs, rhs and ratio.
    """
    s = 1.0 / p
    m = int(np.floor(s)) + 1
    axis = np.linspace(0.0, 1.0, n)
    _, y = np.meshgrid(axis, axis, indexing="ij")
    spacing = 1.0 / (n - 1)

    rows = []
    for r in r_list:
        cutoff = GridFunction(cutoff_profile(y, r))
        cutoff_besov = bmd_besov(cutoff, s, np.inf, 1.0, m).value
        cutoff_sup = float(np.max(np.abs(cutoff.values)))
        near = y < 4.0 * r
        for name, g in g_samples.items():
            if g.n != n:
                raise ValueError(f"g sample {name!r} must live on the {n} x {n} grid")
            lhs = bmd_besov(GridFunction(cutoff.values * g.values), s, p, 1.0, m).value
            g_strip = float((spacing**2 * np.sum(np.abs(g.values[near]) ** p)) ** (1.0 / p))
            rhs = cutoff_besov * g_strip + cutoff_sup * bmd_besov(g, s, p, 1.0, m).value
            rows.append(
                {
                    "r": float(r),
                    "g": name,
                    "lhs": lhs,
                    "rhs": rhs,
                    "ratio": lhs / rhs if rhs > 0 else 0.0,
                }
            )
    return rows
