"""HTTP facade over the experiment driver.

The service computes and returns; it never writes artifacts.  Clients
(the bundled CLI in particular) persist the response wherever they run.
Dataset paths in configs are resolved on the service host.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..core import EngineError, ConfigError, HINGE, SQUARED
from ..data import ManifestError, ParseError, SyntheticSpec, presets
from ..experiment import ExperimentConfig, config_from_mapping, execute
from .models import (ExperimentRequest, ExperimentResponse, ValidateRequest,
                     ValidateResponse, PresetInfo, SyntheticPlanRequest,
                     SyntheticPlanResponse, HealthResponse)

VERSION = "0.1.0"

app = FastAPI(title="taskcov", version=VERSION)


def _to_config(req: ExperimentRequest) -> ExperimentConfig:
    raw = req.model_dump(by_alias=True)
    try:
        return config_from_mapping(raw)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=VERSION)


@app.get("/presets", response_model=list[PresetInfo])
def list_presets():
    out = []
    for name, spec in sorted(presets().items()):
        out.append(PresetInfo(name=name, m=spec.m, d=spec.d,
                              n_parents=spec.n_parents,
                              per_task_n=list(spec.per_task_n),
                              label_model=spec.label_model,
                              noise_scale=spec.noise_scale))
    return out


@app.post("/experiments/run", response_model=ExperimentResponse)
def run_experiment(req: ExperimentRequest):
    config = _to_config(req)
    try:
        result = execute(config)
    except (ManifestError, ParseError) as e:
        raise HTTPException(status_code=404, detail=str(e))
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except EngineError as e:
        raise HTTPException(status_code=500, detail=f"training failed: {e}")
    return ExperimentResponse(**result.to_payload())


@app.post("/config/validate", response_model=ValidateResponse)
def validate_config(req: ValidateRequest):
    try:
        config = config_from_mapping(req.config)
    except ConfigError as e:
        return ValidateResponse(valid=False, errors=[str(e)], resolved=None)
    errors: list = []
    if req.check_dataset and config.dataset not in presets():
        from ..data import load_problem
        try:
            load_problem(config.dataset, lam=config.lam,
                         loss=config.loss or SQUARED)
        except (ManifestError, ParseError, EngineError) as e:
            errors.append(str(e))
    return ValidateResponse(valid=not errors, errors=errors,
                            resolved=config.to_payload())


@app.post("/synthetic/plan", response_model=SyntheticPlanResponse)
def plan_synthetic(req: SyntheticPlanRequest):
    if (req.preset is None) == (req.spec is None):
        raise HTTPException(status_code=422,
                            detail="give exactly one of preset or spec")
    try:
        if req.preset is not None:
            named = presets()
            if req.preset not in named:
                raise HTTPException(status_code=404,
                                    detail=f"unknown preset {req.preset!r}")
            base = named[req.preset].to_payload()
        else:
            base = dict(req.spec)
        base["seed"] = req.seed
        spec = SyntheticSpec.from_payload(base)
    except (ConfigError, KeyError, TypeError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    default_loss = HINGE if spec.label_model == "logistic" else SQUARED
    return SyntheticPlanResponse(spec=spec.to_payload(), default_loss=default_loss)
