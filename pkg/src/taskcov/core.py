"""Domain types shared by every layer of the engine.

The engine trains one linear predictor per task while estimating a
positive semidefinite matrix of inter-task affinities.  Everything that
crosses a module boundary is defined here: task data, the joint problem,
the covariance pair, the dual-side training state, run configuration,
and the deterministic seed derivation used by all samplers.

Conventions
-----------
* All numeric arrays are float64, C-ordered numpy arrays.
* Weight-like matrices are stored with one row per task, shape (m, d).
* Types are immutable by convention after construction; ``DualState`` is
  the one deliberately mutable record and has a single owner at any time
  (a worker, or the single-machine driver).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

HINGE = "hinge"
SQUARED = "squared"
LOSS_KINDS = (HINGE, SQUARED)

RHO_AFFINITY = "affinity-bound"
RHO_FIXED = "fixed"


class EngineError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(EngineError):
    pass


class EmptyTask(EngineError):
    pass


class BadLabel(EngineError):
    pass


class BadLambda(EngineError):
    pass


class ConfigError(EngineError):
    """Invalid run or experiment configuration."""


# ---------------------------------------------------------------------------
# Deterministic seed derivation
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1
# splitmix64 constants; fixed here so streams are stable across platforms
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _splitmix(x: int) -> int:
    x = (x + _GAMMA) & _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, round_index: int, task_id: int) -> int:
    """Per-(round, task) stream seed.

    Python's builtin ``hash`` is process-salted, so the mix is an explicit
    splitmix64 chain.  Distinct (round, task) pairs get distinct streams
    for any base seed, and the result is stable across platforms.
    """
    x = _splitmix(seed & _MASK)
    x = _splitmix(x ^ ((round_index + 1) & _MASK))
    x = _splitmix(x ^ ((task_id + 1) & _MASK))
    return x


def derived_rng(seed: int, round_index: int, task_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, round_index, task_id)))


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

def _as_matrix(x) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if a.ndim != 2:
        raise DimensionMismatch(f"feature array must be 2-D, got shape {a.shape}")
    return a


def _as_vector(x) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if a.ndim != 1:
        raise DimensionMismatch(f"expected 1-D array, got shape {a.shape}")
    return a


@dataclass
class TaskData:
    """One task's examples: features (n_i, d) and labels (n_i,)."""

    task_id: int
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = _as_matrix(self.features)
        self.labels = _as_vector(self.labels)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch(
                f"task {self.task_id}: {self.features.shape[0]} feature rows "
                f"vs {self.labels.shape[0]} labels"
            )

    @property
    def n_i(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def to_payload(self) -> dict:
        return {
            "task_id": self.task_id,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "TaskData":
        return cls(payload["task_id"], payload["features"], payload["labels"])


@dataclass
class MultiTaskProblem:
    """The joint training problem: m tasks in a shared feature space.

    ``lam`` is the regularization weight on the coupled quadratic term;
    ``loss`` is one of ``"hinge"`` or ``"squared"`` and applies to every
    task.
    """

    tasks: list
    d: int
    lam: float
    loss: str

    @property
    def m(self) -> int:
        return len(self.tasks)

    @property
    def n(self) -> np.ndarray:
        return np.array([t.n_i for t in self.tasks], dtype=np.int64)

    def to_payload(self) -> dict:
        return {
            "tasks": [t.to_payload() for t in self.tasks],
            "d": self.d,
            "lam": self.lam,
            "loss": self.loss,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "MultiTaskProblem":
        return cls(
            [TaskData.from_payload(t) for t in payload["tasks"]],
            payload["d"],
            payload["lam"],
            payload["loss"],
        )


def validate_problem(problem: MultiTaskProblem) -> MultiTaskProblem:
    """Check structural validity; returns the problem unchanged.

    Raises
    ------
    EmptyTask        : any task with zero examples, or zero tasks.
    DimensionMismatch: any task whose feature width differs from d.
    BadLabel         : hinge labels outside {-1, +1}, or non-finite labels.
    BadLambda        : lam <= 0 or non-finite.
    """
    if problem.m < 1:
        raise EmptyTask("problem has no tasks")
    if not np.isfinite(problem.lam) or problem.lam <= 0.0:
        raise BadLambda(f"lam must be positive and finite, got {problem.lam}")
    if problem.loss not in LOSS_KINDS:
        raise ConfigError(f"unknown loss {problem.loss!r}; expected one of {LOSS_KINDS}")
    for t in problem.tasks:
        if t.n_i == 0:
            raise EmptyTask(f"task {t.task_id} has no examples")
        if t.d != problem.d:
            raise DimensionMismatch(
                f"task {t.task_id} has width {t.d}, problem declares {problem.d}"
            )
        if not np.all(np.isfinite(t.labels)):
            raise BadLabel(f"task {t.task_id} has non-finite labels")
        if problem.loss == HINGE and not np.all(np.abs(t.labels) == 1.0):
            raise BadLabel(f"task {t.task_id}: hinge labels must be exactly -1 or +1")
    return problem


# ---------------------------------------------------------------------------
# Feature map seam
# ---------------------------------------------------------------------------

@dataclass
class FeatureMap:
    """Row-wise feature transform applied once at data-preparation time.

    Only the identity map is implemented; the solver layers never see the
    map, they always work on already-transformed features.  A nonlinear
    map would subclass by overriding ``apply`` and ``out_dim``.
    """

    kind: str = "identity"

    def __post_init__(self):
        if self.kind != "identity":
            raise ConfigError(f"unknown feature map {self.kind!r}")

    def apply(self, features: np.ndarray) -> np.ndarray:
        return features

    def out_dim(self, d: int) -> int:
        return d

    def to_payload(self) -> dict:
        return {"kind": self.kind}

    @classmethod
    def from_payload(cls, payload: dict) -> "FeatureMap":
        return cls(payload["kind"])


def apply_feature_map(problem: MultiTaskProblem, fmap: FeatureMap) -> MultiTaskProblem:
    """Return a problem whose features have been pushed through ``fmap``."""
    tasks = [TaskData(t.task_id, fmap.apply(t.features), t.labels) for t in problem.tasks]
    return MultiTaskProblem(tasks, fmap.out_dim(problem.d), problem.lam, problem.loss)


# ---------------------------------------------------------------------------
# Covariance pair
# ---------------------------------------------------------------------------

@dataclass
class TaskCovariance:
    """The inter-task affinity matrix ``sigma`` and its inverse ``omega``.

    Invariants (checked by ``validate``): both symmetric, sigma PSD with
    unit trace, and sigma @ omega = I whenever the regularized inverse
    did not floor any eigenvalue (``floored`` records whether it did).
    """

    sigma: np.ndarray
    omega: np.ndarray
    floored: bool = False

    def __post_init__(self):
        self.sigma = _as_matrix(self.sigma)
        self.omega = _as_matrix(self.omega)

    @property
    def m(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def initial(cls, m: int) -> "TaskCovariance":
        """Uniform prior: sigma = I/m, omega = m I."""
        return cls(np.eye(m) / m, np.eye(m) * m, floored=False)

    def validate(self, tol: float = 1e-8) -> "TaskCovariance":
        s, o = self.sigma, self.omega
        if s.shape != o.shape or s.shape[0] != s.shape[1]:
            raise DimensionMismatch(f"covariance shapes {s.shape} / {o.shape}")
        if not np.allclose(s, s.T, atol=tol) or not np.allclose(o, o.T, atol=tol):
            raise EngineError("covariance pair must be symmetric")
        ev = np.linalg.eigvalsh(s)
        if ev.min() < -tol:
            raise EngineError(f"sigma not PSD: min eigenvalue {ev.min()}")
        if abs(np.trace(s) - 1.0) > tol:
            raise EngineError(f"tr(sigma) = {np.trace(s)}, expected 1")
        if not self.floored:
            resid = np.abs(s @ o - np.eye(self.m)).max()
            if resid > tol:
                raise EngineError(f"sigma @ omega deviates from I by {resid}")
        return self

    def to_payload(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "omega": self.omega.tolist(),
            "floored": self.floored,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "TaskCovariance":
        return cls(payload["sigma"], payload["omega"], payload["floored"])


# ---------------------------------------------------------------------------
# Dual-side training state
# ---------------------------------------------------------------------------

@dataclass
class DualState:
    """Dual variables plus the derived summaries the server works with.

    alpha : list of m arrays, alpha[i] has length n_i
    b     : (m, d); row i is the alpha-weighted feature mean of task i,
            b_i = (1/n_i) * sum_j alpha[i][j] * x_j
    w     : (m, d); row i is the predictor of task i,
            w_i = (1/lam) * sum_k sigma[i, k] * b_k

    The b rows make every quadratic the server needs O(m^2 d): the full
    n x n coupling matrix over all samples is never materialized.
    """

    alpha: list
    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.alpha = [_as_vector(a) for a in self.alpha]
        self.b = _as_matrix(self.b)
        self.w = _as_matrix(self.w)

    @classmethod
    def zeros(cls, problem: MultiTaskProblem) -> "DualState":
        return cls(
            [np.zeros(t.n_i) for t in problem.tasks],
            np.zeros((problem.m, problem.d)),
            np.zeros((problem.m, problem.d)),
        )

    def copy(self) -> "DualState":
        return DualState([a.copy() for a in self.alpha], self.b.copy(), self.w.copy())

    def check_consistent(self, problem: MultiTaskProblem, sigma: np.ndarray,
                         tol: float = 1e-8) -> None:
        """Verify b and w are the summaries implied by alpha and sigma."""
        scale = 1.0 + max(float(np.abs(self.b).max()), float(np.abs(self.w).max()))
        for i, t in enumerate(problem.tasks):
            b_i = (t.features.T @ self.alpha[i]) / t.n_i
            if np.abs(b_i - self.b[i]).max() > tol * scale:
                raise EngineError(f"b row {i} inconsistent with alpha")
        w_ref = (sigma @ self.b) / problem.lam
        if np.abs(w_ref - self.w).max() > tol * scale:
            raise EngineError("w inconsistent with (b, sigma)")

    def to_payload(self) -> dict:
        return {
            "alpha": [a.tolist() for a in self.alpha],
            "b": self.b.tolist(),
            "w": self.w.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "DualState":
        return cls(payload["alpha"], payload["b"], payload["w"])


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Knobs of the synchronous training loop.

    eta       : aggregation step size in (0, 1]; eta >= 1/m is required
                for the safe-averaging guarantee and checked at run time.
    T         : max communication rounds per weight phase.
    H         : coordinate steps per task per round.
    P         : alternating phases (weight phase + covariance update).
    gap_tol   : stop a weight phase once the certified gap falls below.
    seed      : base seed; all per-round, per-task streams derive from it.
    rho_mode  : "affinity-bound" recomputes the safe damping factor from
                the current sigma after every covariance update; "fixed"
                uses rho_fixed unchanged.
    omega_update : disable to keep the initial covariance throughout
                (pure weight training).
    workers   : thread-pool size for the simulated worker fleet.
    """

    eta: float = 1.0
    T: int = 50
    H: int = 100
    P: int = 1
    gap_tol: float = 1e-4
    seed: int = 0
    rho_mode: str = RHO_AFFINITY
    rho_fixed: float | None = None
    omega_update: bool = True
    workers: int = 1

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if self.T < 0 or self.H < 1 or self.P < 1:
            raise ConfigError(f"need T >= 0, H >= 1, P >= 1; got T={self.T} H={self.H} P={self.P}")
        if self.gap_tol < 0:
            raise ConfigError(f"gap_tol must be >= 0, got {self.gap_tol}")
        if self.rho_mode not in (RHO_AFFINITY, RHO_FIXED):
            raise ConfigError(f"unknown rho_mode {self.rho_mode!r}")
        if self.rho_mode == RHO_FIXED:
            if self.rho_fixed is None or self.rho_fixed <= 0:
                raise ConfigError("rho_mode 'fixed' requires rho_fixed > 0")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def to_payload(self) -> dict:
        return {
            "eta": self.eta, "T": self.T, "H": self.H, "P": self.P,
            "gap_tol": self.gap_tol, "seed": self.seed,
            "rho_mode": self.rho_mode, "rho_fixed": self.rho_fixed,
            "omega_update": self.omega_update, "workers": self.workers,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RunConfig":
        return cls(**payload)
