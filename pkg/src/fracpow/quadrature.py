"""Shifted-quadrature rules for the fractional power of an HPD matrix.

For ``0 < alpha < 1`` the fractional power has the integral representation::

    A^alpha = sin(alpha pi) / (alpha pi) * A * int_0^inf (t^(1/alpha) I + A)^(-1) dt
            = sin(alpha pi) / pi       * A * int_0^inf tau^(alpha-1) (tau I + A)^(-1) dtau

Every rule built here discretizes this as::

    A^alpha b  ~=  sum_k  omega_k * A (sigma_k I + A)^(-1) b

with shifts ``sigma_k >= 0`` and positive effective weights ``omega_k`` that
already absorb the ``sin(alpha pi)`` prefactor.  Three constructions are
provided:

``gj1``
    Cayley map ``tau = (1 - s) / (1 + s)`` turns the ``tau`` integral into a
    Gauss-Jacobi problem on ``[-1, 1]`` with exponents ``(alpha - 1, -alpha)``
    and an analytic resolvent factor.  Node ``s_k`` gives
    ``sigma_k = (1 - s_k) / (1 + s_k)`` and
    ``omega_k = (2 sin(alpha pi) / pi) * w_k / (1 + s_k)``.

``gj2``
    ``gj1`` applied to ``A / c`` with ``c = sqrt(lambda_lo * lambda_hi)``;
    by ``A^alpha = c^alpha (A/c)^alpha`` the shifts scale by ``c`` and the
    weights by ``c^alpha``.  Centering the spectrum around 1 shrinks the node
    count dramatically on ill-conditioned problems.

``de``
    Double-exponential substitution ``t = exp(pi sinh u)`` in the original
    ``t`` integral, discretized by the trapezoid rule with step ``h`` on a
    truncated window: ``sigma(u) = exp(pi sinh(u) / alpha)`` and
    ``omega(u) = sin(alpha pi)/(alpha pi) * pi cosh(u) exp(pi sinh u) * h``.

The scalar transfer function ``Q(lambda) = sum_k omega_k lambda/(sigma_k +
lambda)`` approximates ``lambda^alpha``; probing it on a spectral interval is
how :func:`select_node_count` picks the smallest adequate ``m``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import beta as beta_function

from .errors import BudgetUnreachableError, QuadratureConstructionError
from .sparse import SpectralBounds

logger = logging.getLogger(__name__)

FAMILIES = ("gj1", "gj2", "de")

#: Node-count search cap for :func:`select_node_count`.
NODE_COUNT_CAP = 2**14

# exp arguments are kept inside +-690 so shifts and weights stay finite
# doubles with headroom for downstream products.
_EXP_CAP = 690.0


@dataclass(frozen=True)
class ShiftedQuadratureRule:
    """Quadrature rule ``sum_k omega_k A (sigma_k I + A)^(-1)`` for ``A^alpha``.

    ``shifts`` are strictly increasing and non-negative, ``weights`` strictly
    positive; both arrays share length ``m >= 1``.
    """

    alpha: float
    family: str
    shifts: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        family = str(self.family).lower()
        shifts = np.asarray(self.shifts, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "weights", weights)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")
        if shifts.ndim != 1 or shifts.size == 0 or shifts.shape != weights.shape:
            raise ValueError("shifts and weights must be equal-length non-empty vectors")
        if shifts[0] < 0.0 or np.any(np.diff(shifts) <= 0.0):
            raise ValueError("shifts must be non-negative and strictly increasing")
        if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be positive and finite")

    @property
    def m(self) -> int:
        return int(self.shifts.size)

    @property
    def nodes(self) -> list[tuple[float, float]]:
        return list(zip(self.shifts.tolist(), self.weights.tolist()))

    def to_json(self) -> str:
        """Serialize as ``{family, alpha, nodes: [[sigma, omega], ...]}``.

        Python's float repr is shortest-round-trip, so a load returns the
        identical doubles.
        """
        return json.dumps(
            {"family": self.family, "alpha": self.alpha, "nodes": self.nodes}
        )

    @classmethod
    def from_json(cls, text: str) -> "ShiftedQuadratureRule":
        obj = json.loads(text)
        nodes = np.asarray(obj["nodes"], dtype=np.float64).reshape(-1, 2)
        return cls(obj["alpha"], obj["family"], nodes[:, 0], nodes[:, 1])


@dataclass(frozen=True)
class ProbeSpec:
    """Positive spectral samples and the scalar accuracy to reach on them."""

    probe_values: np.ndarray
    budget: float

    def __post_init__(self) -> None:
        values = np.unique(np.asarray(self.probe_values, dtype=np.float64))
        object.__setattr__(self, "probe_values", values)
        object.__setattr__(self, "budget", float(self.budget))
        if values.size == 0 or np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("probe values must be positive and finite")
        if not self.budget > 0.0:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class DEParams:
    """Tuning knobs for the double-exponential construction.

    The trapezoid window starts at ``[-initial_halfwidth, initial_halfwidth]``
    and expands outward in ``step`` increments until the scalar integrand at
    both probe extremes drops below ``truncation_budget / (100 m)``.
    """

    truncation_budget: float = 1e-14
    step: float = 0.5
    initial_halfwidth: float = 3.0


def _jacobi_recurrence(m: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the order-m Jacobi matrix for (1-s)^a (1+s)^b."""
    d = np.empty(m)
    d[0] = (b - a) / (a + b + 2.0)
    if m == 1:
        return d, np.empty(0)
    j = np.arange(1, m, dtype=np.float64)
    d[1:] = (b * b - a * a) / ((2 * j + a + b) * (2 * j + a + b + 2.0))
    e = np.empty(m - 1)
    # The generic off-diagonal formula has a removable 0/0 at j = 1 whenever
    # a + b = -1, which is exactly the exponent pair used here; the first
    # coefficient therefore gets its cancelled closed form.
    e[0] = math.sqrt(4.0 * (a + 1.0) * (b + 1.0) / ((a + b + 2.0) ** 2 * (a + b + 3.0)))
    if m > 2:
        j = np.arange(2, m, dtype=np.float64)
        num = 4.0 * j * (j + a) * (j + b) * (j + a + b)
        den = (2 * j + a + b) ** 2 * (2 * j + a + b + 1.0) * (2 * j + a + b - 1.0)
        e[1:] = np.sqrt(num / den)
    return d, e


def gauss_jacobi_nodes(m: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the m-point Gauss rule for weight (1-s)^a (1+s)^b.

    Nodes are the eigenvalues of the symmetrized three-term recurrence
    (Golub-Welsch); weights come from the Christoffel function
    ``w_k = 1 / sum_j p_j(s_k)^2`` over the orthonormal polynomials, which
    needs O(m) memory where full eigenvectors would need O(m^2).
    """
    if m < 1:
        raise ValueError("node count must be >= 1")
    if a <= -1.0 or b <= -1.0:
        raise ValueError("Jacobi exponents must exceed -1")
    mu0 = 2.0 ** (a + b + 1.0) * beta_function(a + 1.0, b + 1.0)
    d, e = _jacobi_recurrence(m, a, b)
    if m == 1:
        return d.copy(), np.array([mu0])
    nodes = eigh_tridiagonal(d, e, eigvals_only=True)
    p_prev = np.zeros(m)
    p = np.full(m, 1.0 / math.sqrt(mu0))
    acc = p * p
    for j in range(m - 1):
        p_next = (nodes - d[j]) * p
        if j > 0:
            p_next -= e[j - 1] * p_prev
        p_next /= e[j]
        acc += p_next * p_next
        p_prev, p = p, p_next
    return nodes, 1.0 / acc


def _build_gj1(alpha: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = gauss_jacobi_nodes(m, alpha - 1.0, -alpha)
    sigma = (1.0 - s) / (1.0 + s)
    omega = (2.0 * math.sin(alpha * math.pi) / math.pi) * w / (1.0 + s)
    # Gauss nodes come back ascending in s, which is descending in sigma.
    return sigma[::-1].copy(), omega[::-1].copy()


def _de_log_integrand(u: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """log of the scalar DE integrand at spectral point lam (overflow-safe)."""
    pis = math.pi * np.sinh(u)
    prefactor = math.sin(alpha * math.pi) / (alpha * math.pi)
    return (
        math.log(prefactor)
        + np.log(math.pi * np.cosh(u))
        + pis
        + math.log(lam)
        - np.logaddexp(pis / alpha, math.log(lam))
    )


def _build_de(
    alpha: float, m: int, bounds: SpectralBounds, params: DEParams
) -> tuple[np.ndarray, np.ndarray]:
    tol = params.truncation_budget / (100.0 * m)
    if tol <= 0.0 or not np.isfinite(tol):
        raise QuadratureConstructionError("truncation budget must be positive and finite")
    log_tol = math.log(tol)
    probes = (bounds.lambda_lo, bounds.lambda_hi)

    def small_enough(u: float) -> bool:
        return all(_de_log_integrand(np.array([u]), alpha, lam)[0] <= log_tol for lam in probes)

    left = -params.initial_halfwidth
    # sigma(u) = exp(pi sinh(u) / alpha) must stay a positive normal double,
    # and exp(pi sinh u) in the weight must stay finite.
    while not small_enough(left):
        left -= params.step
        if math.pi * math.sinh(left) / alpha < -_EXP_CAP:
            raise QuadratureConstructionError(
                "truncation search failed on the left: integrand does not reach "
                f"{tol:.3e} before the shifts underflow"
            )
    right = params.initial_halfwidth
    while not small_enough(right):
        right += params.step
        if math.pi * math.sinh(right) / alpha > _EXP_CAP or math.pi * math.sinh(right) > _EXP_CAP:
            raise QuadratureConstructionError(
                "truncation search failed on the right: integrand does not reach "
                f"{tol:.3e} before the weights overflow"
            )
    if m == 1:
        u = np.array([0.5 * (left + right)])
        h = right - left
    else:
        u = np.linspace(left, right, m)
        h = (right - left) / (m - 1)
    pis = math.pi * np.sinh(u)
    sigma = np.exp(pis / alpha)
    prefactor = math.sin(alpha * math.pi) / (alpha * math.pi)
    omega = prefactor * math.pi * np.cosh(u) * np.exp(pis) * h
    return sigma, omega


def build_rule(
    family: str,
    alpha: float,
    m: int,
    bounds: SpectralBounds | None = None,
    de_params: DEParams | None = None,
) -> ShiftedQuadratureRule:
    """Construct an m-node rule of the requested family.

    ``bounds`` is ignored by ``gj1`` and required by ``gj2`` (for the
    geometric-mean scaling) and ``de`` (for the truncation probes).
    """
    family = str(family).lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m < 1:
        raise ValueError("node count must be >= 1")
    if family == "gj1":
        sigma, omega = _build_gj1(alpha, m)
    elif family == "gj2":
        if bounds is None:
            raise ValueError("gj2 needs spectral bounds for its scaling")
        c = math.sqrt(bounds.lambda_lo * bounds.lambda_hi)
        sigma, omega = _build_gj1(alpha, m)
        sigma = c * sigma
        omega = c**alpha * omega
    else:
        if bounds is None:
            raise ValueError("de needs spectral bounds for its truncation probes")
        sigma, omega = _build_de(alpha, m, bounds, de_params or DEParams())
    return ShiftedQuadratureRule(alpha, family, sigma, omega)


def scalar_apply(rule: ShiftedQuadratureRule, lam):
    """Evaluate the scalar transfer ``Q(lam) = sum_k omega_k lam/(sigma_k + lam)``.

    Accepts a scalar or an array of spectral points.
    """
    lam_arr = np.asarray(lam, dtype=np.float64)
    q = np.sum(
        rule.weights * (lam_arr[..., None] / (rule.shifts + lam_arr[..., None])), axis=-1
    )
    return float(q) if np.isscalar(lam) or lam_arr.ndim == 0 else q


def probe_values_from_bounds(bounds: SpectralBounds, count: int = 11) -> np.ndarray:
    """Spectral samples: both endpoints plus ``count - 2`` log-spaced interior points."""
    return np.unique(np.geomspace(bounds.lambda_lo, bounds.lambda_hi, count))


def probe_error(rule: ShiftedQuadratureRule, probe_values: np.ndarray) -> float:
    """Worst absolute deviation ``|lam^alpha - Q(lam)|`` over the samples."""
    lam = np.asarray(probe_values, dtype=np.float64)
    return float(np.max(np.abs(lam**rule.alpha - scalar_apply(rule, lam))))


def select_node_count(
    family: str,
    alpha: float,
    bounds: SpectralBounds,
    probe: ProbeSpec,
    *,
    m_cap: int = NODE_COUNT_CAP,
    de_params: DEParams | None = None,
) -> ShiftedQuadratureRule:
    """Smallest rule whose scalar error on the probe set meets the budget.

    The search doubles ``m`` from 4 until a rule passes, then bisects down to
    the smallest passing count on that bracket.  Raises
    :class:`BudgetUnreachableError` once the cap is exceeded, which in double
    precision signals an unattainable budget rather than a too-small cap.
    """
    if family.lower() == "de":
        de_params = replace(de_params or DEParams(), truncation_budget=probe.budget)

    def attempt(m: int) -> tuple[ShiftedQuadratureRule, float]:
        rule = build_rule(family, alpha, m, bounds, de_params)
        return rule, probe_error(rule, probe.probe_values)

    lo = 0
    m = min(4, m_cap)
    best = None
    while True:
        rule, err = attempt(m)
        logger.debug("select_node_count %s m=%d err=%.3e budget=%.3e", family, m, err, probe.budget)
        if err <= probe.budget:
            best = rule
            break
        lo = m
        if m >= m_cap:
            raise BudgetUnreachableError(
                f"no {family} rule with m <= {m_cap} reaches scalar budget "
                f"{probe.budget:.3e} (last error {err:.3e} at m = {m})"
            )
        m = min(2 * m, m_cap)
    hi = best.m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        rule, err = attempt(mid)
        if err <= probe.budget:
            best, hi = rule, mid
        else:
            lo = mid
    return best
