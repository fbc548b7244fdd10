"""
Absolute-Neumann heat flow by spectral calculus.

S(t) = exp(t Delta) acts on the eigen-coefficients of a SpectralCache. With a
partial spectrum the unresolved remainder is kept and decayed with the largest
computed eigenvalue, so S(0) = 1, the semigroup law and self-adjointness
stay exact.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np
from scipy import integrate
from sklearn.linear_model import LinearRegression

from .dec import OperatorBundle
from .hodge import ABSOLUTE_NEUMANN, LaplacianHandle, leray_project
from .norms import lp_norm

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-8
MIN_FIT_POINTS = 4
ROUGH_PROFILES = ("octave", "white")


@dataclass(frozen=True)
class SpectralCache:
    """Eigenpairs of -Delta in the mass inner product; harmonic eigenvalues are 0."""

    degree: int
    eigenvalues: np.ndarray
    eigenfields: np.ndarray
    mass: np.ndarray
    residuals: np.ndarray
    n_harmonic: int
    full: bool

    @property
    def lambda_cut(self) -> float:
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    @property
    def lambda_first(self) -> float:
        """Smallest nonzero eigenvalue."""
        if self.n_harmonic >= self.eigenvalues.size:
            raise ValueError("spectrum has no nonzero eigenvalue")
        return float(self.eigenvalues[self.n_harmonic])


def spectral_decompose(handle: LaplacianHandle) -> SpectralCache:
    """
    Freeze the eigenpairs of an absolute-Neumann handle.

    Raises:
        ValueError: For a relative handle.
        RuntimeError: If an eigenpair residual exceeds 1e-8 * lambda_max.
    """
    # ---- Guard clauses ----
    if handle.bc != ABSOLUTE_NEUMANN:
        raise ValueError("heat flow lives on the absolute Neumann complex")

    values = handle.eigenvalues.copy()
    values[: handle.n_harmonic] = 0.0
    values = np.maximum(values, 0.0)
    fields = handle.eigenvectors
    applied = (handle.stiffness @ fields) / handle.mass[:, None]
    defect = applied - fields * values[None, :]
    residuals = np.sqrt(np.sum(handle.mass[:, None] * defect**2, axis=0))

    scale = max(handle.lambda_max, 1.0)
    if residuals.size and residuals.max() > RESIDUAL_TOLERANCE * scale:
        raise RuntimeError(
            f"eigenpair residual {residuals.max():.3g} exceeds tolerance; refine or raise modes"
        )
    for array in (values, residuals):
        array.flags.writeable = False
    return SpectralCache(
        degree=handle.degree,
        eigenvalues=values,
        eigenfields=fields,
        mass=handle.mass,
        residuals=residuals,
        n_harmonic=handle.n_harmonic,
        full=handle.full_spectrum,
    )


def _coefficients(cache: SpectralCache, omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (len(cache.mass),):
        raise ValueError(f"cochain needs {len(cache.mass)} values for degree {cache.degree}")
    return cache.eigenfields.T @ (cache.mass * omega)


def _spectral_function(
    cache: SpectralCache, omega: np.ndarray, func: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    coeffs = _coefficients(cache, omega)
    result = cache.eigenfields @ (func(cache.eigenvalues) * coeffs)
    if not cache.full:
        tail = np.asarray(omega, dtype=float) - cache.eigenfields @ coeffs
        result = result + func(np.array([cache.lambda_cut]))[0] * tail
    return result


def heat_apply(cache: SpectralCache, omega: np.ndarray, t: float) -> np.ndarray:
    """
    S(t) omega = sum exp(-lambda_i t) <<omega, phi_i>> phi_i.

    Raises:
        ValueError: For t < 0.
    """
    # ---- Guard clauses ----
    if t < 0:
        raise ValueError(f"heat time must be non-negative, got {t}")
    if t == 0:
        return np.array(omega, dtype=float, copy=True)
    return _spectral_function(cache, omega, lambda lam: np.exp(-lam * t))


def laplace_apply(cache: SpectralCache, omega: np.ndarray) -> np.ndarray:
    """Delta omega (negative semidefinite), the generator of heat_apply."""
    return _spectral_function(cache, omega, lambda lam: -lam)


def power_apply(cache: SpectralCache, omega: np.ndarray, exponent: float, t: float = 0.0) -> np.ndarray:
    """(-Delta)^exponent S(t) omega."""
    return _spectral_function(cache, omega, lambda lam: lam**exponent * np.exp(-lam * t))


def mass_norm(cache: SpectralCache, omega: np.ndarray) -> float:
    return float(np.sqrt(np.sum(cache.mass * np.asarray(omega) ** 2)))


def harmonic_part(cache: SpectralCache, omega: np.ndarray) -> np.ndarray:
    h = cache.n_harmonic
    coeffs = _coefficients(cache, omega)
    return cache.eigenfields[:, :h] @ coeffs[:h]


def commutation_check(
    bundle: OperatorBundle,
    caches: Dict[int, SpectralCache],
    omega: np.ndarray,
    t: float,
) -> Dict[str, float]:
    """
    Residuals of heat flow against d, delta_c and the Leray projection.

    Args:
        bundle: Operators of the mesh.
        caches: Spectral caches keyed by degree 0, 1 and 2.
        omega: Absolute 1-cochain.
        t: Heat time.

    Returns:
        {"d": |d S omega - S d omega|, "delta": ..., "leray": ...} in mass norms.
    """
    missing = {0, 1, 2} - set(caches)
    if missing:
        raise ValueError(f"missing spectral caches for degrees {sorted(missing)}")

    heated = heat_apply(caches[1], omega, t)
    d_residual = bundle.exterior(1, heated) - heat_apply(caches[2], bundle.exterior(1, omega), t)
    delta_residual = bundle.codifferential(1, heated) - heat_apply(
        caches[0], bundle.codifferential(1, omega), t
    )
    leray_residual = leray_project(bundle, heated) - heat_apply(
        caches[1], leray_project(bundle, omega), t
    )
    return {
        "d": bundle.norm(2, d_residual),
        "delta": bundle.norm(0, delta_residual),
        "leray": bundle.norm(1, leray_residual),
    }


# ----------------------------------------------------------------------
# Smoothing and long-time behaviour
# ----------------------------------------------------------------------


def rough_cochain(cache: SpectralCache, seed: int = 0, profile: str = "octave") -> np.ndarray:
    """
    Unit-norm rough data without harmonic part.

    "octave" puts equal energy into every octave of the spectrum
    (coefficients ~ lambda^-1/2 under a uniform eigenvalue density), the
    critical profile for the t^(-m/2) smoothing rate. "white" uses i.i.d.
    normal coefficients.
    """
    if profile not in ROUGH_PROFILES:
        raise ValueError(f"profile must be one of {ROUGH_PROFILES}")
    rng = np.random.default_rng(seed)
    h = cache.n_harmonic
    lam = cache.eigenvalues[h:]
    if lam.size == 0:
        raise ValueError("spectrum has no nonzero eigenvalue")
    if profile == "octave":
        coeffs = rng.choice([-1.0, 1.0], size=lam.size) / np.sqrt(lam)
    else:
        coeffs = rng.standard_normal(lam.size)
    omega = cache.eigenfields[:, h:] @ coeffs
    return omega / mass_norm(cache, omega)


@dataclass(frozen=True)
class SmoothingFit:
    slope: float
    intercept: float
    times: np.ndarray
    values: np.ndarray


def smoothing_exponent(
    cache: SpectralCache, omega: np.ndarray, m: float, t_grid: Sequence[float]
) -> SmoothingFit:
    """
    Fit the slope of log |(-Delta)^(m/2) S(t) omega| against log t.

    Only times in [10 / lambda_max, 0.1 / lambda_1] are used.

    Raises:
        ValueError: With fewer than 4 usable times.
    """
    lower = 10.0 / cache.lambda_cut
    upper = 0.1 / cache.lambda_first
    times = np.array([t for t in t_grid if lower <= t <= upper], dtype=float)
    if len(times) < MIN_FIT_POINTS:
        raise ValueError(
            f"only {len(times)} grid times inside [{lower:.3g}, {upper:.3g}]; "
            f"need {MIN_FIT_POINTS}"
        )
    values = np.array([mass_norm(cache, power_apply(cache, omega, m / 2.0, t)) for t in times])
    model = LinearRegression().fit(np.log(times)[:, None], np.log(values))
    logger.debug("Smoothing fit m=%s slope=%.4f over %d times", m, model.coef_[0], len(times))
    return SmoothingFit(
        slope=float(model.coef_[0]),
        intercept=float(model.intercept_),
        times=times,
        values=values,
    )


def usable_times(cache: SpectralCache, count: int = 8) -> np.ndarray:
    """Log-spaced times spanning the window accepted by smoothing_exponent."""
    lower = 10.0 / cache.lambda_cut
    upper = 0.1 / cache.lambda_first
    if lower >= upper:
        raise ValueError("spectrum too narrow for a smoothing fit; refine the mesh")
    return np.geomspace(lower, upper, count)


def kodaira_limit(cache: SpectralCache, omega: np.ndarray, T: float) -> float:
    """|S(T) omega - P^N omega| in the mass norm."""
    if T <= 0:
        raise ValueError("T must be positive")
    return mass_norm(cache, heat_apply(cache, omega, T) - harmonic_part(cache, omega))


def sweep_norms(cache: SpectralCache, omega: np.ndarray, t_grid: Sequence[float]) -> List[Dict[str, float]]:
    """Spectral L2, H1 and H2 surrogate norms of S(t) omega along a time grid."""
    rows = []
    for t in t_grid:
        heated = heat_apply(cache, omega, float(t))
        rows.append(
            {
                "t": float(t),
                "norm_L2": mass_norm(cache, heated),
                "norm_H1s": mass_norm(
                    cache, _spectral_function(cache, heated, lambda lam: np.sqrt(1.0 + lam))
                ),
                "norm_H2s": mass_norm(
                    cache, _spectral_function(cache, heated, lambda lam: 1.0 + lam)
                ),
            }
        )
    return rows


# ----------------------------------------------------------------------
# Duhamel
# ----------------------------------------------------------------------


def duhamel_check(
    cache: SpectralCache,
    W_family: Callable[[float], np.ndarray],
    N_family: Callable[[float], np.ndarray],
    s: float,
    eps: float,
    intervals: int = 32,
) -> float:
    """
    |W(s) - S(3(s - eps)) W(eps) - int_eps^s S(3(s - sigma)) N(sigma) dsigma|.

    The integral uses scipy's composite Simpson rule over an even number of
    intervals.

    Raises:
        ValueError: Unless 0 < eps <= s and the interval count is even.
    """
    # ---- Guard clauses ----
    if not 0 < eps <= s:
        raise ValueError("need 0 < eps <= s")
    if intervals < 2 or intervals % 2:
        raise ValueError("Simpson's rule needs an even number of intervals >= 2")

    target = np.asarray(W_family(s), dtype=float)
    if eps == s:
        return mass_norm(cache, target - np.asarray(W_family(eps), dtype=float))

    nodes = np.linspace(eps, s, intervals + 1)
    samples = np.stack(
        [heat_apply(cache, N_family(float(sigma)), 3.0 * (s - sigma)) for sigma in nodes]
    )
    integral = integrate.simpson(samples, x=nodes, axis=0)
    start = heat_apply(cache, W_family(eps), 3.0 * (s - eps))
    return mass_norm(cache, target - start - integral)


# ----------------------------------------------------------------------
# L^p behaviour and analyticity
# ----------------------------------------------------------------------


def lp_heat_constant(
    bundle: OperatorBundle,
    cache: SpectralCache,
    samples: int,
    t_list: Sequence[float],
    p: float,
    seed: int = 0,
) -> float:
    """Measured K with |S(t) omega|_p <= K |omega|_p over random 1-cochains."""
    if cache.degree != 1:
        raise ValueError("lp_heat_constant measures 1-cochains")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        omega = rng.standard_normal(len(cache.mass))
        base = lp_norm(bundle, omega, p, degree=1).value
        for t in t_list:
            heated = lp_norm(bundle, heat_apply(cache, omega, float(t)), p, degree=1).value
            worst = max(worst, heated / base)
    return float(worst)


def analytic_bound_table(
    cache: SpectralCache, t_list: Sequence[float], k_max: int = 3
) -> List[Dict[str, float]]:
    """sup over the spectrum of lambda^k exp(-lambda t) next to k^k / t^k."""
    rows = []
    for t in t_list:
        for k in range(1, k_max + 1):
            measured = float(np.max(cache.eigenvalues**k * np.exp(-cache.eigenvalues * t)))
            rows.append({"t": float(t), "k": k, "sup": measured, "bound": float(k**k / t**k)})
    return rows
