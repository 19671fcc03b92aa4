"""Loss functions, their convex conjugates, and the per-coordinate step.

Two losses are supported:

* ``hinge``   : l(a) = max(0, 1 - y a), labels y in {-1, +1}.
                Conjugate l*(u) = u y on u y in [-1, 0], +infinity outside.
* ``squared`` : l(a) = (a - y)^2, smooth with curvature bound 1/mu, mu = 1/2.
                Conjugate l*(u) = u^2/4 + u y, finite everywhere.

Conjugate evaluations outside the domain return the ``INFEASIBLE``
singleton, never a float sentinel, so an out-of-domain value can not
slip through a sum unnoticed.  Domain membership is tested with a small
absolute tolerance ``BOX_TOL``: aggregation arithmetic can push a dual
coordinate past its box by a few ulp and that must not read as
infeasible.
"""

from __future__ import annotations

import numpy as np

from .core import EngineError, HINGE, SQUARED, LOSS_KINDS, ConfigError

BOX_TOL = 1e-9


class ConjugateDomainViolation(EngineError):
    """A dual coordinate left the conjugate's domain by more than BOX_TOL."""


class NonPositiveCurvature(EngineError):
    """Defensive: the per-coordinate denominator was not positive."""


class _Infeasible:
    __slots__ = ()

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        raise TypeError("INFEASIBLE is not a truth value; test with 'is INFEASIBLE'")


INFEASIBLE = _Infeasible()


def check_loss_kind(kind: str) -> str:
    if kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
    return kind


def loss_eval(kind: str, a, y):
    """l(a; y).  Accepts scalars or numpy arrays (elementwise)."""
    if kind == HINGE:
        return np.maximum(0.0, 1.0 - np.asarray(y) * a)
    if kind == SQUARED:
        return (np.asarray(a) - y) ** 2
    raise ConfigError(f"unknown loss {kind!r}")


def loss_conjugate(kind: str, u: float, y: float):
    """l*(u; y), or INFEASIBLE outside the domain.

    hinge  : u y on [-1 - BOX_TOL, BOX_TOL] (value u y, exact linear form)
    squared: u^2/4 + u y everywhere
    """
    if kind == HINGE:
        t = u * y
        if t < -1.0 - BOX_TOL or t > BOX_TOL:
            return INFEASIBLE
        return t
    if kind == SQUARED:
        return u * u / 4.0 + u * y
    raise ConfigError(f"unknown loss {kind!r}")


def smoothness_mu(kind: str):
    """mu such that l is (1/mu)-smooth, or None for non-smooth losses."""
    return 0.5 if kind == SQUARED else None


def dual_box(kind: str, y: float):
    """Feasible interval for a dual coordinate alpha (l*(-alpha) finite).

    hinge: alpha y in [0, 1]; squared: unbounded (returns infinities).
    """
    if kind == HINGE:
        return (0.0, 1.0) if y > 0 else (-1.0, 0.0)
    return (-np.inf, np.inf)


def conjugate_terms_neg_alpha(kind: str, alpha: np.ndarray, y: np.ndarray,
                              task_id: int | None = None) -> np.ndarray:
    """Vector of l*(-alpha_j; y_j); raises on any domain violation."""
    if kind == HINGE:
        t = alpha * y
        bad = (t < -BOX_TOL) | (t > 1.0 + BOX_TOL)
        if np.any(bad):
            j = int(np.argmax(bad))
            where = f"task {task_id}, " if task_id is not None else ""
            raise ConjugateDomainViolation(
                f"{where}coordinate {j}: alpha*y = {t[j]} outside [0, 1]"
            )
        return -t
    if kind == SQUARED:
        return alpha * alpha / 4.0 - alpha * y
    raise ConfigError(f"unknown loss {kind!r}")


def coordinate_delta(kind: str, a_cur: float, y: float, wx: float, vx: float,
                     q: float, n_i: int, rho: float, sigma_ii: float,
                     lam: float) -> float:
    """Exact maximizer of the local-subproblem objective along one coordinate.

    Inputs are the coordinate's current total dual value ``a_cur`` (base
    plus accumulated in-round change), its label ``y``, the snapshot
    prediction ``wx = w_i . x_j``, the in-round drift ``vx = v . x_j``
    with v the accumulated alpha-weighted feature change, and the squared
    feature norm ``q``.  Returns the step delta; the caller accumulates.

    With c = rho * sigma_ii / (lam * n_i):

    squared: delta = (y - a_cur/2 - wx - c vx) / (1/2 + c q)
    hinge  : delta0 = (y - wx - c vx) / (c q), then the new total is
             clipped to the feasible box [0, 1] * y.
    """
    c = rho * sigma_ii / (lam * n_i)
    if kind == SQUARED:
        denom = 0.5 + c * q
        if denom <= 0.0:
            raise NonPositiveCurvature(f"denominator {denom} <= 0")
        return (y - 0.5 * a_cur - wx - c * vx) / denom
    if kind == HINGE:
        lo, hi = (0.0, 1.0) if y > 0 else (-1.0, 0.0)
        cq = c * q
        slope = y - wx - c * vx
        if cq > 0.0:
            a_new = a_cur + slope / cq
            # concave quadratic: the box-clipped stationary point is optimal
            a_new = min(max(a_new, lo), hi)
        else:
            if cq < 0.0:
                raise NonPositiveCurvature(f"c*q = {cq} < 0")
            # zero-norm feature row: objective linear in delta
            if slope > 0.0:
                a_new = hi
            elif slope < 0.0:
                a_new = lo
            else:
                a_new = a_cur
        return a_new - a_cur
    raise ConfigError(f"unknown loss {kind!r}")
