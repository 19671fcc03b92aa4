"""Server-side state: aggregation of worker rounds and the covariance update.

The server never touches raw samples.  It keeps the (m, d) matrix of
per-task dual summary rows b and the predictor rows w = sigma @ b / lam,
folds in each round's eta-scaled deltas, and between weight phases
refits the inter-task covariance from the current predictors in closed
form.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .core import EngineError, DimensionMismatch, TaskCovariance


class MissingDelta(EngineError):
    """A synchronous round ended without a contribution from some task."""


class ZeroWeights(EngineError):
    """All predictors are zero; the covariance update is undefined."""


class DegenerateDiagonal(EngineError):
    """sigma has a non-positive diagonal entry; the damping bound is undefined."""


@dataclass
class AggregationState:
    """What the server owns: summary rows b, predictor rows w, round count.

    The arrays may be shared with a ``DualState`` held by the driver;
    aggregation mutates them in place.
    """

    b: np.ndarray
    w: np.ndarray
    round_index: int = 0


def aggregate_round(state: AggregationState, deltas: list,
                    sigma: np.ndarray, lam: float) -> AggregationState:
    """Fold one synchronous round of eta-scaled per-task deltas into state.

    ``deltas[i]`` is task i's scaled summary change (eta * delta_b_i), or
    None if the task did not report; any None raises MissingDelta, the
    round is all-or-nothing.  w is updated incrementally through sigma,
    preserving w = sigma @ b / lam without a recompute.
    """
    m, d = state.b.shape
    if len(deltas) != m:
        raise MissingDelta(f"got {len(deltas)} deltas for {m} tasks")
    for i, dm in enumerate(deltas):
        if dm is None:
            raise MissingDelta(f"task {i} missing from round {state.round_index + 1}")
        if np.asarray(dm).shape != (d,):
            raise DimensionMismatch(f"delta for task {i} has shape {np.asarray(dm).shape}")
    delta_b = np.vstack([np.asarray(dm, dtype=np.float64) for dm in deltas])
    state.b += delta_b
    state.w += (sigma @ delta_b) / lam
    state.round_index += 1
    return state


def omega_step(w: np.ndarray, eps: float | None = None) -> TaskCovariance:
    """Closed-form covariance refit from the predictor rows.

    With G = w @ w.T = U diag(s) U^T (s clamped at 0), the trace-1
    minimizer of the coupled regularizer is

        sigma = U diag(sqrt(s)) U^T / sum_k sqrt(s_k)

    and omega is its inverse with the sqrt-eigenvalues floored at eps
    before inverting (default eps = 1e-12 * max(sqrt(s_max), 1)), so
    omega stays finite for rank-deficient w.  Raises ZeroWeights when
    every sqrt-eigenvalue is at or below the floor.
    """
    g = w @ w.T
    s, u = np.linalg.eigh(g)
    s = np.maximum(s, 0.0)
    r = np.sqrt(s)
    r_max = float(r.max()) if r.size else 0.0
    eps_eff = 1e-12 * max(r_max, 1.0) if eps is None else eps
    if r_max <= eps_eff:
        raise ZeroWeights("all predictors are (numerically) zero")
    total = float(r.sum())
    sigma = (u * (r / total)) @ u.T
    sigma = 0.5 * (sigma + sigma.T)
    floored = bool(np.any(r < eps_eff))
    omega = (u * (total / np.maximum(r, eps_eff))) @ u.T
    omega = 0.5 * (omega + omega.T)
    return TaskCovariance(sigma=sigma, omega=omega, floored=floored)


def rho_bound(sigma: np.ndarray, eta: float) -> float:
    """Safe damping factor: eta * max_i sum_k |sigma[i,k]| / sigma[i,i].

    Always >= eta; equals eta for diagonal sigma and eta * m when all
    tasks are identical.  Raises DegenerateDiagonal on a non-positive
    diagonal entry.
    """
    diag = np.diag(sigma)
    if np.any(diag <= 0.0):
        i = int(np.argmax(diag <= 0.0))
        raise DegenerateDiagonal(f"sigma[{i},{i}] = {diag[i]} <= 0")
    return eta * float(np.max(np.sum(np.abs(sigma), axis=1) / diag))


def theoretical_round_bound(mu: float, lam: float, rho: float, n_star: float,
                            pi_star: float, eta: float, theta: float,
                            eps_target: float, m: int) -> float:
    """Sufficient round count for a dual error eps_target (smooth losses).

        t >= 1/(eta (1 - theta)) * (lam mu + rho n* pi*) / (lam mu)
             * log(m / eps_target)

    theta is the per-round local convergence factor; theta -> 1 returns
    infinity.  Diagnostic only, nothing in the runtime consumes it.
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    if eps_target <= 0 or mu <= 0 or lam <= 0 or eta <= 0:
        raise ValueError("mu, lam, eta, eps_target must all be positive")
    if theta == 1.0:
        return math.inf
    return (1.0 / (eta * (1.0 - theta))
            * (lam * mu + rho * n_star * pi_star) / (lam * mu)
            * math.log(m / eps_target))
