"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np
import pytest

from taskcov.core import TaskData, MultiTaskProblem, validate_problem
from taskcov.objectives import weights_from_duals
from taskcov.core import DualState


def make_problem(rng: np.random.Generator, m: int = 3, d: int = 5,
                 n_range: tuple = (6, 12), loss: str = "hinge",
                 lam: float = 0.1) -> MultiTaskProblem:
    tasks = []
    for i in range(m):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        x = rng.standard_normal((n, d))
        if loss == "hinge":
            y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        else:
            y = rng.standard_normal(n)
        tasks.append(TaskData(i, x, y))
    return validate_problem(MultiTaskProblem(tasks, d, lam, loss))


def make_sigma(rng: np.random.Generator, m: int) -> np.ndarray:
    """Random PSD, unit trace, strictly positive diagonal."""
    a = rng.standard_normal((m, m + 3))
    s = a @ a.T + 0.05 * np.eye(m)
    return s / np.trace(s)


def feasible_alpha(rng: np.random.Generator, problem: MultiTaskProblem,
                   scale: float = 1.0) -> list:
    """Random dual block inside the conjugate domain for the loss."""
    alpha = []
    for t in problem.tasks:
        if problem.loss == "hinge":
            alpha.append(t.labels * rng.random(t.n_i) * min(scale, 1.0))
        else:
            alpha.append(scale * rng.standard_normal(t.n_i))
    return alpha


def consistent_state(problem: MultiTaskProblem, alpha: list,
                     sigma: np.ndarray) -> DualState:
    """DualState whose b and w rows are derived from alpha and sigma."""
    b = np.vstack([(t.features.T @ alpha[i]) / t.n_i
                   for i, t in enumerate(problem.tasks)])
    w = weights_from_duals(b, sigma, problem.lam)
    return DualState([np.asarray(a, float).copy() for a in alpha], b, w)


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)
