"""Conjugate gradients for families of shifted Hermitian positive definite systems.

One Krylov sequence serves every system ``(sigma_k I + A) x_k = b`` because
shifting leaves Krylov spaces unchanged.  The seed recurrence runs on the
smallest shift (re-basing the others to ``delta_k = sigma_k - sigma_seed >=
0``), and each shifted residual stays collinear with the seed residual:
``r_k^(i) = zeta_k^(i) * r_seed^(i)`` with a scalar ``zeta`` obeying a
three-term recurrence in the seed step/direction coefficients.  Tracking
``zeta_k * ||r_seed||`` therefore prices every system's residual at the cost
of one matrix-vector product per joint iteration.

A shift whose tracked residual first dips under its threshold is verified by
one explicit residual evaluation before it is frozen; if the explicit value
disagrees (the tracked estimate drifted optimistic), the shift simply keeps
iterating and is re-checked at a geometrically lower trigger.  A shift whose
tracked estimate has fallen three orders of magnitude below its threshold
while the explicit residual still fails has hit the rounding floor of double
precision; it is then frozen unconverged rather than spinning until the
iteration cap.  Converged flags are consequently always backed by an explicit
residual, never by the collinearity estimate alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import SolverBreakdownError
from .sparse import HermitianSparseMatrix

logger = logging.getLogger(__name__)

BREAKDOWN_FLOOR = 1e-300

# Tracked-residual slack under the threshold before declaring the explicit
# residual stuck at the rounding floor.
_STAGNATION_FACTOR = 1e-3


@dataclass(frozen=True)
class ShiftedSolveRequest:
    """Shifts, per-shift stopping thresholds, and an iteration cap.

    ``max_iterations`` of ``None`` lets the solver default to ``10 n``.
    Thresholds are absolute residual norms; ``inf`` is allowed and means the
    zero iterate already qualifies.
    """

    shifts: np.ndarray
    thresholds: np.ndarray
    max_iterations: int | None = None

    def __post_init__(self) -> None:
        shifts = np.atleast_1d(np.asarray(self.shifts, dtype=np.float64))
        thresholds = np.broadcast_to(
            np.asarray(self.thresholds, dtype=np.float64), shifts.shape
        ).copy()
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "thresholds", thresholds)
        if shifts.size == 0 or np.any(shifts < 0.0) or not np.all(np.isfinite(shifts)):
            raise ValueError("shifts must be finite and non-negative")
        if np.unique(shifts).size != shifts.size:
            raise ValueError("shifts must be distinct")
        if np.any(thresholds <= 0.0) or np.any(np.isnan(thresholds)):
            raise ValueError("thresholds must be positive")
        if self.max_iterations is not None and int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class ShiftedSolveReport:
    """Per-shift convergence record for one multi-shift solve.

    ``final_residual_norms`` are explicitly recomputed residuals (except for
    the untouched zero iterate, whose residual is exactly ``||b||``), so
    ``converged[k]`` implies ``final_residual_norms[k] <= thresholds[k]``.
    ``total_matvecs`` counts joint iterations (one product each); explicit
    verification products are tallied separately in ``verification_matvecs``.
    ``residual_history`` rows are ``(iteration, shift_index, tracked_norm)``.
    """

    shifts: np.ndarray
    thresholds: np.ndarray
    iterations_used: np.ndarray
    final_residual_norms: np.ndarray
    converged: np.ndarray
    total_matvecs: int
    verification_matvecs: int
    residual_history: np.ndarray | None = None

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _explicit_residual_norm(A, b, sigma: float, x: np.ndarray) -> float:
    return float(np.linalg.norm(b - sigma * x - A.matvec(x)))


def shifted_cg_solve(
    A: HermitianSparseMatrix,
    b: np.ndarray,
    request: ShiftedSolveRequest,
    *,
    record_history: bool = False,
    callback=None,
) -> tuple[np.ndarray, ShiftedSolveReport]:
    """Solve ``(sigma_k I + A) x_k = b`` for every shift in the request.

    Returns ``(solutions, report)`` where ``solutions[k]`` is the iterate for
    shift ``k``.  ``callback(iteration, seed_residual, zetas, solutions)`` is
    invoked after each joint iteration with live views (copy to retain;
    entries for frozen shifts hold their last active values).
    """
    b = np.asarray(b)
    if b.shape != (A.n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({A.n},)")
    shifts = request.shifts
    thresholds = request.thresholds
    m = shifts.size
    max_iterations = (
        10 * A.n if request.max_iterations is None else int(request.max_iterations)
    )
    dtype = np.promote_types(b.dtype, A.values.dtype)
    if not np.issubdtype(dtype, np.inexact):
        dtype = np.float64
    b = b.astype(dtype, copy=False)

    sigma_seed = float(shifts.min())
    delta = shifts - sigma_seed

    X = np.zeros((m, A.n), dtype=dtype)
    bnorm = float(np.linalg.norm(b))
    final_res = np.full(m, bnorm)
    iterations_used = np.zeros(m, dtype=np.int64)
    converged = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)
    check_scale = np.ones(m)
    verification_matvecs = 0
    history: list[tuple[int, int, float]] = []
    # Zero iterate already qualifies: residual is exactly b, no product needed.
    trivially_done = bnorm <= thresholds
    converged[trivially_done] = True
    active[trivially_done] = False

    r = b.copy()
    p = b.copy()
    P = np.tile(b, (m, 1))
    rr = float(np.vdot(r, r).real)
    zeta_prev = np.ones(m)
    zeta = np.ones(m)
    alpha_prev = 1.0
    beta_prev = 0.0
    iterations = 0

    while active.any() and iterations < max_iterations:
        i = iterations
        q = A.matvec(p) + sigma_seed * p
        pq = float(np.vdot(p, q).real)
        if pq <= 0.0 or pq < BREAKDOWN_FLOOR:
            raise SolverBreakdownError(
                f"curvature term {pq:.3e} at iteration {i} is not safely positive; "
                "the operator is numerically singular or indefinite on the Krylov space"
            )
        alpha = rr / pq

        act = np.flatnonzero(active)
        za = zeta[act]
        zpa = zeta_prev[act]
        denom = alpha * beta_prev * (zpa - za) + zpa * alpha_prev * (1.0 + delta[act] * alpha)
        if not np.all(np.isfinite(denom)) or np.any(denom <= 0.0):
            raise SolverBreakdownError(
                f"collinearity recurrence produced a non-positive denominator at iteration {i}"
            )
        znext = za * zpa * alpha_prev / denom
        ratio = znext / za
        X[act] += (alpha * ratio)[:, None] * P[act]
        zeta_prev[act] = za
        zeta[act] = znext

        r -= alpha * q
        rr_next = float(np.vdot(r, r).real)
        rnorm = np.sqrt(rr_next)
        iterations = i + 1

        tracked = znext * rnorm
        if record_history:
            history.extend(zip([i + 1] * act.size, act.tolist(), tracked.tolist()))
        for pos, k in enumerate(act):
            if tracked[pos] > thresholds[k] * check_scale[k]:
                continue
            explicit = _explicit_residual_norm(A, b, shifts[k], X[k])
            verification_matvecs += 1
            if explicit <= thresholds[k]:
                active[k] = False
                converged[k] = True
                final_res[k] = explicit
                iterations_used[k] = i + 1
            elif tracked[pos] <= thresholds[k] * _STAGNATION_FACTOR:
                # Explicit residual is pinned at the rounding floor while the
                # recurrence keeps shrinking; further iterations cannot help.
                active[k] = False
                final_res[k] = explicit
                iterations_used[k] = i + 1
                logger.debug(
                    "shift %d stagnated: explicit %.3e vs threshold %.3e", k, explicit, thresholds[k]
                )
            else:
                check_scale[k] *= 0.5

        if not active.any():
            if callback is not None:
                callback(i + 1, r, zeta, X)
            break
        if rr_next < BREAKDOWN_FLOOR**2:
            raise SolverBreakdownError(
                f"seed residual norm vanished below {BREAKDOWN_FLOOR:g} with "
                "unconverged shifts remaining"
            )
        beta = rr_next / rr
        still = active[act]
        act2 = act[still]
        P[act2] = znext[still][:, None] * r + (beta * ratio[still] ** 2)[:, None] * P[act2]
        p = r + beta * p
        alpha_prev, beta_prev, rr = alpha, beta, rr_next
        if callback is not None:
            callback(i + 1, r, zeta, X)

    leftover = np.flatnonzero(active)
    for k in leftover:
        explicit = _explicit_residual_norm(A, b, shifts[k], X[k])
        verification_matvecs += 1
        final_res[k] = explicit
        converged[k] = explicit <= thresholds[k]
        iterations_used[k] = iterations

    report = ShiftedSolveReport(
        shifts=shifts.copy(),
        thresholds=thresholds.copy(),
        iterations_used=iterations_used,
        final_residual_norms=final_res,
        converged=converged,
        total_matvecs=int(iterations_used.max(initial=0)),
        verification_matvecs=verification_matvecs,
        residual_history=np.array(history) if record_history else None,
    )
    return X, report


def single_shift_cg(
    A: HermitianSparseMatrix,
    b: np.ndarray,
    sigma: float,
    *,
    tol: float,
    max_iterations: int | None = None,
    callback=None,
) -> tuple[np.ndarray, int, float]:
    """Plain conjugate gradients on ``(sigma I + A) x = b``.

    Kept deliberately independent of the multi-shift recurrences so it can
    serve as a reference path.  Stops when the recurrence residual norm drops
    to ``tol`` (absolute).  ``callback(iteration, x, r)`` sees each iterate
    through live views (copy to retain).  Returns
    ``(x, iterations, final_residual_norm)``.
    """
    b = np.asarray(b)
    if b.shape != (A.n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({A.n},)")
    if sigma < 0.0:
        raise ValueError("shift must be non-negative")
    max_iterations = 10 * A.n if max_iterations is None else int(max_iterations)
    x = np.zeros_like(b, dtype=np.promote_types(b.dtype, A.values.dtype))
    r = b.astype(x.dtype, copy=True)
    p = r.copy()
    rr = float(np.vdot(r, r).real)
    rnorm = np.sqrt(rr)
    iterations = 0
    while rnorm > tol and iterations < max_iterations:
        q = A.matvec(p) + sigma * p
        pq = float(np.vdot(p, q).real)
        if pq <= 0.0:
            raise SolverBreakdownError(
                f"curvature term {pq:.3e} is not positive; operator is not positive definite"
            )
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_next = float(np.vdot(r, r).real)
        rnorm = np.sqrt(rr_next)
        iterations += 1
        if callback is not None:
            callback(iterations, x, r)
        if rnorm <= tol:
            break
        p = r + (rr_next / rr) * p
        rr = rr_next
    return x, iterations, float(rnorm)
