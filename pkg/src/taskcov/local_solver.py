"""Per-task coordinate ascent on the damped local dual subproblem.

Each round a worker receives its predictor snapshot w_i and runs H
randomized coordinate steps over its own dual block, holding every other
task fixed.  Cross-task interaction enters only through w_i; the
worker's own in-round movement is tracked by

    v = sum_j delta_alpha_j * x_j

giving the local objective (up to a constant shared by all workers)

    f(da) = -(1/n) sum_j l*(-(alpha_j + da_j))
            -(1/n) sum_j da_j (w_i . x_j)
            - quad_snapshot / (2 lam m)
            - rho sigma_ii / (2 lam n^2) * ||v||^2

The damping factor rho >= eta * max_i sum_k |sigma[i,k]| / sigma[i,i]
makes eta-weighted addition of all workers' blocks safe: the combined
global dual never decreases.  Each coordinate step is an exact
maximization (``coordinate_delta``), so f never decreases within a
round either.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .core import (TaskData, EngineError, ConfigError, HINGE, SQUARED,
                   derived_rng)
from .losses import (coordinate_delta, conjugate_terms_neg_alpha,
                     smoothness_mu, NonPositiveCurvature)


class NotComputable(EngineError):
    """The requested bound has no closed form for this loss."""


@dataclass
class LocalRoundInput:
    """Everything a worker needs for one round on one task.

    alpha_block is read-only here; the caller owns it and applies the
    returned delta after the synchronization barrier.  loss, lam and m
    are per-run constants a worker is configured with once.
    """

    alpha_block: np.ndarray
    w_i: np.ndarray
    sigma_ii: float
    rho: float
    H: int
    rng_seed: int
    loss: str
    lam: float
    m: int

    def __post_init__(self):
        # H = 0 is allowed as a degenerate no-op round (diagnostics use it)
        if self.H < 0:
            raise ConfigError(f"H must be >= 0, got {self.H}")
        if self.sigma_ii <= 0 or self.rho <= 0 or self.lam <= 0:
            raise ConfigError(
                f"need sigma_ii, rho, lam > 0; got {self.sigma_ii}, {self.rho}, {self.lam}"
            )


@dataclass
class LocalRoundOutput:
    """delta_alpha is the raw block change; delta_b = (1/n) sum_j
    delta_alpha_j x_j, unscaled (the runtime applies the eta factor).
    local_obj_gain is the realized subproblem increase, >= 0 up to
    roundoff."""

    delta_alpha: np.ndarray
    delta_b: np.ndarray
    local_obj_gain: float


def local_subproblem_objective(delta_alpha: np.ndarray, inp: LocalRoundInput,
                               data: TaskData, quad_snapshot: float) -> float:
    """Literal evaluation of the damped local objective at delta_alpha."""
    n = data.n_i
    total_alpha = inp.alpha_block + delta_alpha
    conj = conjugate_terms_neg_alpha(inp.loss, total_alpha, data.labels,
                                     task_id=data.task_id)
    v = data.features.T @ delta_alpha
    val = -float(np.mean(conj))
    val -= float(np.mean(delta_alpha * (data.features @ inp.w_i)))
    val -= quad_snapshot / (2.0 * inp.lam * inp.m)
    val -= inp.rho * inp.sigma_ii / (2.0 * inp.lam * n * n) * float(v @ v)
    return val


def local_sdca(inp: LocalRoundInput, data: TaskData) -> LocalRoundOutput:
    """H exact coordinate steps on uniformly random coordinates.

    The coordinate stream comes from a generator seeded with
    inp.rng_seed only, so a round is reproducible in isolation.
    """
    n = data.n_i
    X = data.features
    y = data.labels
    if inp.alpha_block.shape[0] != n:
        raise ConfigError(f"alpha block length {inp.alpha_block.shape[0]} != n_i {n}")
    if inp.w_i.shape[0] != X.shape[1]:
        raise ConfigError(f"w_i length {inp.w_i.shape[0]} != d {X.shape[1]}")

    xw = X @ inp.w_i                      # snapshot predictions, fixed all round
    q = np.einsum("ij,ij->i", X, X)       # squared row norms
    rng = np.random.Generator(np.random.PCG64(inp.rng_seed))
    picks = rng.integers(0, n, size=inp.H)

    delta = np.zeros(n)
    v = np.zeros(X.shape[1])
    kind, lam, rho, sig = inp.loss, inp.lam, inp.rho, inp.sigma_ii
    alpha = inp.alpha_block
    for j in picks:
        x_j = X[j]
        d_j = coordinate_delta(kind, alpha[j] + delta[j], y[j], xw[j],
                               float(v @ x_j), q[j], n, rho, sig, lam)
        if d_j != 0.0:
            delta[j] += d_j
            v += d_j * x_j

    # realized gain; the shared quad-snapshot constant cancels
    conj_new = conjugate_terms_neg_alpha(kind, alpha + delta, y, task_id=data.task_id)
    conj_old = conjugate_terms_neg_alpha(kind, alpha, y, task_id=data.task_id)
    gain = -float(np.mean(conj_new - conj_old))
    gain -= float(np.mean(delta * xw))
    gain -= rho * sig / (2.0 * lam * n * n) * float(v @ v)

    return LocalRoundOutput(delta_alpha=delta, delta_b=v / n, local_obj_gain=gain)


def estimate_theta(inp: LocalRoundInput, data: TaskData,
                   reference_iters: int) -> float:
    """Empirical per-round convergence factor of the local solver.

    Runs the round twice from the same seed, once with H steps and once
    with reference_iters steps; the long run stands in for the local
    optimum.  Returns (gain_ref - gain_H) / gain_ref clamped to
    [0, 1 - 1e-12].  A reference gain <= 1e-14 means the block is
    already optimal and the estimate is 0.  Single-realization
    diagnostic, not an average over streams.
    """
    if reference_iters < max(inp.H, 1):
        raise ConfigError(f"reference_iters {reference_iters} < H {inp.H}")
    if inp.H == 0:
        return 1.0 - 1e-12
    short = local_sdca(inp, data)
    long_inp = LocalRoundInput(inp.alpha_block, inp.w_i, inp.sigma_ii, inp.rho,
                               reference_iters, inp.rng_seed, inp.loss,
                               inp.lam, inp.m)
    long = local_sdca(long_inp, data)
    if long.local_obj_gain <= 1e-14:
        return 0.0
    theta = (long.local_obj_gain - short.local_obj_gain) / long.local_obj_gain
    return min(max(theta, 0.0), 1.0 - 1e-12)


def suggested_iterations(loss: str, theta_target: float, rho: float,
                         sigma_ii: float, q_max: float, lam: float,
                         n_i: int) -> int:
    """Steps per round sufficient for a per-round factor theta_target.

    Smooth losses only:
        H >= log(1/theta) * (rho sigma_ii q_max + mu lam n_i) / (mu lam).
    Raises NotComputable for hinge (no closed-form per-round factor).
    """
    mu = smoothness_mu(loss)
    if mu is None:
        raise NotComputable(f"no smooth-rate iteration bound for loss {loss!r}")
    if not (0.0 < theta_target <= 1.0):
        raise ConfigError(f"theta_target must be in (0, 1], got {theta_target}")
    if theta_target == 1.0:
        return 0
    bound = math.log(1.0 / theta_target) * (rho * sigma_ii * q_max + mu * lam * n_i) / (mu * lam)
    return int(math.ceil(bound))
