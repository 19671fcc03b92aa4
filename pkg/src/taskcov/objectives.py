"""Primal and dual objectives and the duality-gap certificate.

The dual quadratic over all samples factors through the per-task summary
vectors b_i = (1/n_i) sum_j alpha_j x_j: with B the (m, d) matrix of
those rows,

    quad = sum_{i,k} sigma[i,k] <b_i, b_k> = tr(sigma B B^T)

so nothing larger than (m, m) or (m, d) is ever formed.  For a state
whose w rows satisfy w = sigma B / lam, the primal regularizer equals
quad / (2 lam^2) * lam = quad / (2 lam), which lets the gap certificate
avoid the inverse matrix entirely.

The gap itself is a sum of per-sample Fenchel terms

    l(w_i . x_j) + l*(-alpha_j) + alpha_j * (w_i . x_j)

each nonnegative, accumulated per task then averaged, so a worker
holding only its own shard can compute its share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .core import MultiTaskProblem, DualState
from .losses import loss_eval, conjugate_terms_neg_alpha


@dataclass
class ObjectiveReport:
    """Certificate for one evaluation point.

    ``gap`` is the per-sample decomposition sum; ``dual`` is stored as
    ``primal - gap`` so the triple is exactly consistent as written.
    """

    primal: float
    dual: float
    gap: float
    per_task_loss: list = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "primal": self.primal, "dual": self.dual, "gap": self.gap,
            "per_task_loss": list(self.per_task_loss),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ObjectiveReport":
        return cls(payload["primal"], payload["dual"], payload["gap"],
                   list(payload["per_task_loss"]))


def quad_form(b: np.ndarray, sigma: np.ndarray) -> float:
    """tr(sigma @ b @ b.T); O(m^2 d), never materializes anything bigger."""
    return float(np.sum(sigma * (b @ b.T)))


def weights_from_duals(b: np.ndarray, sigma: np.ndarray, lam: float) -> np.ndarray:
    """Per-task predictors implied by the dual summaries: w = sigma @ b / lam."""
    return (sigma @ b) / lam


def primal_objective(problem: MultiTaskProblem, w: np.ndarray,
                     omega: np.ndarray) -> float:
    """Sum of per-task mean losses plus (lam/2) tr(w.T-coupled quadratic).

    ``w`` has one row per task; the coupling term is
    (lam/2) * sum_{i,k} omega[i,k] <w_i, w_k>.
    """
    total = 0.0
    for i, t in enumerate(problem.tasks):
        z = t.features @ w[i]
        total += float(np.mean(loss_eval(problem.loss, z, t.labels)))
    total += 0.5 * problem.lam * float(np.sum(omega * (w @ w.T)))
    return total


def dual_objective(problem: MultiTaskProblem, alpha: list, b: np.ndarray,
                   sigma: np.ndarray, lam: float) -> float:
    """-quad/(2 lam) - sum_i mean_j l*(-alpha_j).

    Raises ConjugateDomainViolation if any coordinate left its box.
    """
    total = -quad_form(b, sigma) / (2.0 * lam)
    for i, t in enumerate(problem.tasks):
        terms = conjugate_terms_neg_alpha(problem.loss, alpha[i], t.labels, task_id=i)
        total -= float(np.mean(terms))
    return total


def duality_gap(problem: MultiTaskProblem, state: DualState,
                sigma: np.ndarray) -> ObjectiveReport:
    """Evaluate the optimality certificate at a consistent state.

    Precondition: state.w rows equal sigma @ state.b / lam (the runtime
    maintains this after every aggregation and covariance refresh).  The
    primal regularizer is then quad/(2 lam) with quad the dual quadratic,
    so the report needs sigma only, not its inverse.
    """
    lam = problem.lam
    loss_sum = 0.0
    gap_sum = 0.0
    per_task_loss = []
    for i, t in enumerate(problem.tasks):
        z = t.features @ state.w[i]
        losses = loss_eval(problem.loss, z, t.labels)
        conj = conjugate_terms_neg_alpha(problem.loss, state.alpha[i], t.labels, task_id=i)
        mean_loss = float(np.mean(losses))
        per_task_loss.append(mean_loss)
        loss_sum += mean_loss
        gap_sum += float(np.mean(losses + conj + state.alpha[i] * z))
    primal = loss_sum + quad_form(state.b, sigma) / (2.0 * lam)
    return ObjectiveReport(primal=primal, dual=primal - gap_sum, gap=gap_sum,
                           per_task_loss=per_task_loss)
