"""Request/response schemas for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ExperimentRequest(BaseModel):
    """Flat experiment config; same keys as the config file."""

    mode: str
    dataset: str
    loss: str | None = None
    lambda_: float = Field(default=1e-2, alias="lambda")
    eta: float = 1.0
    T: int = 200
    H: int = 100
    P: int = 2
    gap_tol: float = 1e-4
    seed: int = 0
    out_dir: str = "taskcov-out"
    rho_mode: str = "affinity-bound"
    rho_fixed: float | None = None
    omega_update: bool = True
    workers: int = 1
    splits: int = 1
    test_fraction: float = 0.25

    model_config = {"populate_by_name": True, "extra": "forbid"}


class TraceRow(BaseModel):
    p: int
    t: int
    dual: float
    primal: float
    gap: float
    elapsed_ms: float
    comm_rounds: int
    touches: int


class EvalOut(BaseModel):
    loss: str
    metric: str
    pooled: float
    per_task: list[float]
    extras: dict[str, float]


class ExperimentResponse(BaseModel):
    config: dict
    loss: str
    trace: list[TraceRow]
    weights: list[list[float]]
    sigma: list[list[float]] | None
    correlation: list[list[float]] | None
    final_gap: float
    comm_rounds: int
    evals: list[EvalOut]
    eval_summary: dict[str, dict[str, float]]


class ValidateRequest(BaseModel):
    config: dict
    check_dataset: bool = False


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]
    resolved: dict | None


class PresetInfo(BaseModel):
    name: str
    m: int
    d: int
    n_parents: int
    per_task_n: list[int]
    label_model: str
    noise_scale: float


class SyntheticPlanRequest(BaseModel):
    """Resolve a preset (or inline spec fields) into a full recipe."""

    preset: str | None = None
    spec: dict | None = None
    seed: int = 0


class SyntheticPlanResponse(BaseModel):
    spec: dict
    default_loss: str


class HealthResponse(BaseModel):
    status: str
    version: str
