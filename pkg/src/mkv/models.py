"""McKean-Vlasov models: drift, diffusion, initial law and reference solutions.

Drifts have the mean-field form

    b(t, x, mu) = f(t, x) + mean_m btilde(t, x, X_m)

evaluated against the empirical measure of an ensemble ``X``.  Every model
exposes the brute-force pairwise sum; models with structure also provide a
cheaper reduced form built from a per-step summary of the ensemble.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import expit
from scipy.stats import norm

__all__ = [
    "InitialLaw",
    "ModelSpec",
    "MODEL_IDS",
    "burgers_model",
    "burgers_reference",
    "double_layer_model",
    "get_model",
    "linear_interaction_model",
    "morse_force",
    "morse_potential",
    "pairwise_model",
    "tent_force",
]

# Rows of the query block processed at once by the pairwise path.
PAIRWISE_BLOCK = 256


@dataclass(frozen=True)
class InitialLaw:
    """Gaussian(mean, var) or Dirac(point) initial distribution."""

    kind: str
    mean: float = 0.0
    var: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "dirac"):
            raise ValueError(f"unknown initial law kind {self.kind!r}")
        if self.var < 0:
            raise ValueError(f"variance must be non-negative, got {self.var}")
        if self.kind == "dirac" and self.var != 0:
            raise ValueError("a Dirac law has zero variance")

    @classmethod
    def gaussian(cls, mean: float, var: float) -> InitialLaw:
        return cls("gaussian", float(mean), float(var))

    @classmethod
    def dirac(cls, point: float) -> InitialLaw:
        return cls("dirac", float(point), 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean, "var": self.var}


Interaction = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """One McKean-Vlasov model.

    Attributes
    ----------
    name : str
    dim : int
    initial : InitialLaw
    sigma : float or callable
        Constant scalar (diffusion ``sigma * I``) or ``sigma(t, x)`` returning
        ``(q, dim, dim)`` matrices for query points ``x`` of shape ``(q, dim)``.
    interaction : callable
        ``btilde(t, x, y)`` broadcasting ``x`` of shape ``(q, 1, dim)`` against
        ``y`` of shape ``(1, N, dim)`` to ``(q, N, dim)``.
    common_force : callable, optional
        ``f(t, x)`` for ``x`` of shape ``(q, dim)``.
    summarize, reduced_drift : callable, optional
        Reduced form: ``summary = summarize(t, ensemble)`` once per step,
        then ``reduced_drift(t, x, summary)`` gives the interaction part.
    reference_density, reference_cdf : callable, optional
        ``(t, x) -> values`` for 1-d query arrays ``x``.
    """

    name: str
    dim: int
    initial: InitialLaw
    sigma: float | Callable[[float, np.ndarray], np.ndarray]
    interaction: Interaction
    common_force: Callable[[float, np.ndarray], np.ndarray] | None = None
    summarize: Callable[[float, np.ndarray], Any] | None = None
    reduced_drift: Callable[[float, np.ndarray, Any], np.ndarray] | None = None
    reference_density: Callable[[float, np.ndarray], np.ndarray] | None = None
    reference_cdf: Callable[[float, np.ndarray], np.ndarray] | None = None
    params: tuple[tuple[str, Any], ...] = ()

    @property
    def has_reduced_form(self) -> bool:
        return self.reduced_drift is not None

    @property
    def has_reference(self) -> bool:
        return self.reference_density is not None

    def prepare(self, t: float, ensemble: np.ndarray) -> Any:
        """Per-step summary for the reduced drift, or ``None``."""
        if self.summarize is None:
            return None
        return self.summarize(t, ensemble)

    def drift(self, t: float, x: np.ndarray, ensemble: np.ndarray, summary: Any = None,
              method: str = "auto") -> np.ndarray:
        """Drift at query points ``x`` (``(q, dim)``) against ``ensemble``.

        ``method`` is ``"reduced"``, ``"pairwise"`` or ``"auto"`` (reduced
        when available).
        """
        if method not in ("auto", "reduced", "pairwise"):
            raise ValueError(f"unknown drift method {method!r}")
        use_reduced = self.has_reduced_form and method != "pairwise"
        if method == "reduced" and not self.has_reduced_form:
            raise ValueError(f"model {self.name!r} has no reduced drift")
        if use_reduced:
            if summary is None:
                summary = self.prepare(t, ensemble)
            out = self.reduced_drift(t, x, summary)
        else:
            out = self.pairwise_drift(t, x, ensemble)
        if self.common_force is not None:
            out = out + self.common_force(t, x)
        return out

    def pairwise_drift(self, t: float, x: np.ndarray, ensemble: np.ndarray) -> np.ndarray:
        """Interaction part by direct O(q N) summation in particle order."""
        x = np.asarray(x, dtype=float)
        ensemble = np.asarray(ensemble, dtype=float)
        n = ensemble.shape[0]
        y = ensemble[np.newaxis, :, :]
        out = np.empty_like(x)
        for lo in range(0, x.shape[0], PAIRWISE_BLOCK):
            block = x[lo:lo + PAIRWISE_BLOCK, np.newaxis, :]
            terms = np.ascontiguousarray(self.interaction(t, block, y).transpose(0, 2, 1))
            out[lo:lo + PAIRWISE_BLOCK] = terms.sum(axis=-1) / n
        return out

    def diffusion(self, t: float, x: np.ndarray) -> float | np.ndarray:
        """Scalar ``sigma`` or per-point ``(q, dim, dim)`` matrices."""
        if callable(self.sigma):
            return self.sigma(t, x)
        return float(self.sigma)

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "initial": self.initial.to_dict(),
                **dict(self.params)}


# -- linear interaction ---------------------------------------------------------------


def linear_interaction_model(c: float = -1.0, dim: int = 1) -> ModelSpec:
    """``dX = c * int (X - y) mu_t(dy) dt + dB`` with ``X_0 ~ N(3, 1/2)``.

    For ``c = -1`` the law is stationary, ``mu_t = N(3, 1/2)`` for all t,
    and is attached as the reference solution (``dim == 1`` only).
    """
    c = float(c)

    def interaction(t, x, y):
        return c * (x - y)

    def summarize(t, ens):
        return ens.sum(axis=0) / ens.shape[0]

    def reduced(t, x, mean):
        return c * (x - mean)

    ref_density = ref_cdf = None
    if c == -1.0 and dim == 1:
        scale = math.sqrt(0.5)

        def ref_density(t, x):
            return norm.pdf(np.asarray(x, dtype=float), loc=3.0, scale=scale)

        def ref_cdf(t, x):
            return norm.cdf(np.asarray(x, dtype=float), loc=3.0, scale=scale)

    return ModelSpec(
        name="ou-linear",
        dim=dim,
        initial=InitialLaw.gaussian(3.0, 0.5),
        sigma=1.0,
        interaction=interaction,
        summarize=summarize,
        reduced_drift=reduced,
        reference_density=ref_density,
        reference_cdf=ref_cdf,
        params=(("c", c),),
    )


# -- double layer Morse potential -----------------------------------------------------


def morse_potential(z):
    z = np.asarray(z, dtype=float)
    return -np.exp(-z * z) + 2.0 * np.exp(-2.0 * z * z)


def morse_force(z):
    """Derivative of the double-layer Morse potential."""
    z = np.asarray(z, dtype=float)
    z2 = z * z
    return 2.0 * z * np.exp(-z2) - 8.0 * z * np.exp(-2.0 * z2)


def tent_force(x):
    """Lipschitz common force ``2 (1 - |x|)`` on ``|x| <= 1``, zero outside."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, 2.0 * (1.0 - np.abs(x)), 0.0)


def double_layer_model(perturbed: bool = False) -> ModelSpec:
    """Morse-force interaction, ``X_0 ~ N(0, 1)``, unit diffusion; no reference."""

    def interaction(t, x, y):
        return morse_force(x - y)

    common = None
    if perturbed:
        def common(t, x):
            return tent_force(x)

    return ModelSpec(
        name="double-layer-perturbed" if perturbed else "double-layer",
        dim=1,
        initial=InitialLaw.gaussian(0.0, 1.0),
        sigma=1.0,
        interaction=interaction,
        common_force=common,
        params=(("perturbed", bool(perturbed)),),
    )


# -- Burgers --------------------------------------------------------------------------


def burgers_model(sigma: float = math.sqrt(0.2)) -> ModelSpec:
    """Drift ``mu_t((-inf, x])`` with ``X_0 = 0`` and diffusion ``sigma``.

    A particle counts itself (``1{y <= x}`` at ``y = x``), which shifts its
    own drift by ``1/N``.
    """
    sigma = float(sigma)

    def interaction(t, x, y):
        return (y <= x).astype(float)

    def summarize(t, ens):
        return np.sort(ens[:, 0], kind="stable")

    def reduced(t, x, sorted_pos):
        counts = np.searchsorted(sorted_pos, x[:, 0], side="right")
        return (counts.astype(float) / sorted_pos.size)[:, np.newaxis]

    def ref_density(t, x):
        return burgers_reference(t, x, sigma)["density"]

    def ref_cdf(t, x):
        return burgers_reference(t, x, sigma)["cdf"]

    return ModelSpec(
        name="burgers",
        dim=1,
        initial=InitialLaw.dirac(0.0),
        sigma=sigma,
        interaction=interaction,
        summarize=summarize,
        reduced_drift=reduced,
        reference_density=ref_density,
        reference_cdf=ref_cdf,
        params=(("sigma", sigma),),
    )


# Composite Gauss-Legendre rule used for the Burgers integrals.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_PANELS = 16
# Integrands are cut where they drop below 1e-16 of their maximum.
_LOG_CUT = math.log(1e-16)


def _half_line_gauss(center: np.ndarray, var: float, upper: bool):
    """Log-integral of ``exp(-(y - c)**2 / (2 var) - g*)`` on a half line.

    ``upper=True`` integrates over ``y >= 0``, otherwise ``y <= 0``; ``g*`` is
    the maximum of the exponent on that half line so the integrand peaks at
    one.  Returns ``(log_mass, log_peak, mean_offset)`` where ``mean_offset``
    is the integrand-weighted mean of ``c - y``.
    """
    c = center if upper else -center
    width2 = -2.0 * var * _LOG_CUT
    peak_at = np.maximum(c, 0.0)
    lo = np.where(c > 0, np.maximum(c - np.sqrt(width2), 0.0), 0.0)
    hi = np.where(c > 0, c + np.sqrt(width2), c + np.sqrt(c * c + width2))
    log_peak = -((peak_at - c) ** 2) / (2.0 * var)

    edges = np.linspace(0.0, 1.0, _GL_PANELS + 1)
    panel_lo = lo[:, None] + (hi - lo)[:, None] * edges[None, :-1]
    panel_w = (hi - lo)[:, None] / _GL_PANELS
    y = panel_lo[:, :, None] + 0.5 * panel_w[:, :, None] * (_GL_NODES + 1.0)
    w = 0.5 * panel_w[:, :, None] * _GL_WEIGHTS
    f = np.exp(-((y - c[:, None, None]) ** 2) / (2.0 * var) - log_peak[:, None, None])
    mass = (w * f).sum(axis=(1, 2))
    offset = (w * f * (c[:, None, None] - y)).sum(axis=(1, 2)) / mass
    if not upper:
        offset = -offset
    return np.log(mass), log_peak, offset


def burgers_reference(t: float, x, sigma: float = math.sqrt(0.2)) -> dict[str, np.ndarray]:
    """CDF and density of the Burgers solution started from a point mass at 0.

    ``cdf = A / (A + B)`` with

        A(x) = int_0^inf  exp(-((x - y)**2 / (2 t) + y) / sigma**2) dy
        B(x) = int_-inf^0 exp(-(x - y)**2 / (2 t sigma**2)) dy

    Both are Gaussian integrals in ``y`` evaluated on log scale by composite
    Gauss-Legendre quadrature.  The density is ``d cdf / dx``, obtained by
    differentiating under the integral sign:
    ``cdf' = (A'/A - B'/B) cdf (1 - cdf)``.
    """
    t = float(t)
    sigma = float(sigma)
    if not t > 0:
        raise ValueError(f"reference requires t > 0, got {t}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.reshape(-1)
    s2 = sigma * sigma
    var = t * s2

    # Completing the square: (x-y)^2/(2t) + y = (y - (x-t))^2/(2t) + x - t/2.
    log_a, peak_a, off_a = _half_line_gauss(xf - t, var, upper=True)
    log_a = log_a + peak_a - (xf - 0.5 * t) / s2
    log_b, peak_b, off_b = _half_line_gauss(xf, var, upper=False)
    log_b = log_b + peak_b

    # cdf = 1 / (1 + B/A), kept in log space against under/overflow.
    cdf = expit(log_a - log_b)
    one_minus = expit(log_b - log_a)
    # d/dx log A = -E_A[x - y] / var and E_A[x - y] = t + E_A[(x - t) - y].
    dlog_a = -(off_a + t) / var
    dlog_b = -off_b / var
    density = (dlog_a - dlog_b) * cdf * one_minus
    return {"cdf": cdf.reshape(shape), "density": density.reshape(shape)}


# -- generic --------------------------------------------------------------------------


def pairwise_model(interaction: Interaction, *, sigma=1.0, initial: InitialLaw | None = None,
                   dim: int = 1, common_force=None, name: str = "custom",
                   reference_density=None, reference_cdf=None) -> ModelSpec:
    """User-supplied pairwise interaction ``btilde(t, x, y)`` (no reduced form)."""
    return ModelSpec(
        name=name,
        dim=dim,
        initial=initial if initial is not None else InitialLaw.dirac(0.0),
        sigma=sigma,
        interaction=interaction,
        common_force=common_force,
        reference_density=reference_density,
        reference_cdf=reference_cdf,
    )


_FACTORIES = {
    "ou-linear": linear_interaction_model,
    "double-layer": lambda: double_layer_model(perturbed=False),
    "double-layer-perturbed": lambda: double_layer_model(perturbed=True),
    "burgers": burgers_model,
}

MODEL_IDS = tuple(_FACTORIES)


def get_model(model_id: str) -> ModelSpec:
    """Look up one of the built-in models by id."""
    try:
        return _FACTORIES[model_id]()
    except KeyError:
        raise ValueError(f"unknown model {model_id!r}; expected one of {MODEL_IDS}") from None
