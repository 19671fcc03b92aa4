"""Experiment driver: config parsing, split protocol, artifact writing.

A run is described by a flat key = value config (file plus overrides):

    mode      dmtrl | stl | ssdca | centralized
    dataset   preset name (see data.presets) or a problem directory
    loss      hinge | squared (default: the dataset's natural loss)
    lambda    regularization weight            (default 1e-2)
    eta       aggregation step size            (default 1.0)
    T         max rounds per weight phase      (default 200)
    H         coordinate steps per task/round  (default 100)
    P         alternating phases               (default 2)
    gap_tol   certificate stop threshold       (default 1e-4)
    seed      base seed                        (default 0)
    out_dir   artifact directory               (default taskcov-out)
    rho_mode  affinity-bound | fixed           (default affinity-bound)
    rho_fixed damping value when fixed
    omega_update  true | false                 (default true)
    workers   thread-pool size                 (default 1)
    splits    independent repeats              (default 1)
    test_fraction  test share for directory datasets (default 0.25)

Split s runs with seed + s: synthetic datasets are redrawn, directory
datasets are reshuffled per task and re-partitioned.  Artifacts:
trace.csv, sigma.csv, correlation.csv, weights.csv from split 0;
eval.csv aggregates all splits.  ``centralized`` is the single-machine
exact solver driven to a 1e-8 certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
import os

import numpy as np

from .core import (MultiTaskProblem, TaskData, RunConfig, ConfigError,
                   HINGE, SQUARED, RHO_AFFINITY, derive_seed, validate_problem)
from .data import (SyntheticSpec, gen_synthetic, presets, load_problem,
                   evaluate)
from .runtime import run_dmtrl, run_stl, run_ssdca

MODES = ("dmtrl", "stl", "ssdca", "centralized")

_DEFAULTS = {
    "loss": None, "lambda": 1e-2, "eta": 1.0, "T": 200, "H": 100, "P": 2,
    "gap_tol": 1e-4, "seed": 0, "out_dir": "taskcov-out",
    "rho_mode": RHO_AFFINITY, "rho_fixed": None, "omega_update": True,
    "workers": 1, "splits": 1, "test_fraction": 0.25,
}


@dataclass
class ExperimentConfig:
    mode: str
    dataset: str
    loss: str | None = None
    lam: float = 1e-2
    eta: float = 1.0
    T: int = 200
    H: int = 100
    P: int = 2
    gap_tol: float = 1e-4
    seed: int = 0
    out_dir: str = "taskcov-out"
    rho_mode: str = RHO_AFFINITY
    rho_fixed: float | None = None
    omega_update: bool = True
    workers: int = 1
    splits: int = 1
    test_fraction: float = 0.25

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss is not None and self.loss not in (HINGE, SQUARED):
            raise ConfigError(f"loss must be hinge or squared, got {self.loss!r}")
        if self.splits < 1:
            raise ConfigError(f"splits must be >= 1, got {self.splits}")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        self.run_config()   # surfaces bad numeric knobs early

    def run_config(self, seed: int | None = None) -> RunConfig:
        gap_tol = self.gap_tol
        if self.mode == "centralized":
            gap_tol = min(gap_tol, 1e-8)
        return RunConfig(eta=self.eta, T=self.T, H=self.H, P=self.P,
                         gap_tol=gap_tol, seed=self.seed if seed is None else seed,
                         rho_mode=self.rho_mode, rho_fixed=self.rho_fixed,
                         omega_update=self.omega_update, workers=self.workers)

    def to_payload(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


_PARSERS = {
    "mode": str, "dataset": str, "loss": str, "lambda": float, "eta": float,
    "T": int, "H": int, "P": int, "gap_tol": float, "seed": int,
    "out_dir": str, "rho_mode": str, "rho_fixed": float,
    "omega_update": _parse_bool, "workers": int, "splits": int,
    "test_fraction": float,
}


def config_from_mapping(raw: dict) -> ExperimentConfig:
    """Build a typed config from string-or-typed values; unknown keys fail."""
    vals = dict(_DEFAULTS)
    for key, val in raw.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if val is None:
            vals[key] = None
            continue
        parser = _PARSERS[key]
        try:
            vals[key] = parser(val) if isinstance(val, str) else val
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad value for {key}: {val!r} ({e})") from None
    if "mode" not in vals or "dataset" not in vals:
        raise ConfigError("config needs at least 'mode' and 'dataset'")
    vals["lam"] = vals.pop("lambda")
    return ExperimentConfig(**vals)


def read_config_file(path: str) -> dict:
    """Flat `key = value` (or `key value`) lines; # comments allowed."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    raw = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" in body:
                key, _, val = body.partition("=")
            else:
                key, _, val = body.partition(" ")
            key, val = key.strip(), val.strip()
            if not key or not val:
                raise ConfigError(f"{path}:{ln}: cannot parse {line.rstrip()!r}")
            raw[key] = val
    return raw


def apply_overrides(raw: dict, overrides: list) -> dict:
    out = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, val = item.partition("=")
        out[key.strip()] = val.strip()
    return out


# ---------------------------------------------------------------------------
# Dataset resolution
# ---------------------------------------------------------------------------

def _shuffle_split(problem: MultiTaskProblem, seed: int, test_fraction: float):
    """Per-task shuffle and train/test partition for directory datasets."""
    train_tasks, test_tasks = [], []
    for t in problem.tasks:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 1, t.task_id)))
        order = rng.permutation(t.n_i)
        n_test = max(1, int(round(test_fraction * t.n_i)))
        n_test = min(n_test, t.n_i - 1) if t.n_i > 1 else 0
        test_idx, train_idx = order[:n_test], order[n_test:]
        train_tasks.append(TaskData(t.task_id, t.features[train_idx], t.labels[train_idx]))
        if n_test:
            test_tasks.append(TaskData(t.task_id, t.features[test_idx], t.labels[test_idx]))
        else:
            test_tasks.append(TaskData(t.task_id, t.features[:1], t.labels[:1]))
    train = MultiTaskProblem(train_tasks, problem.d, problem.lam, problem.loss)
    test = MultiTaskProblem(test_tasks, problem.d, problem.lam, problem.loss)
    return validate_problem(train), test


def resolve_dataset(config: ExperimentConfig, split: int):
    """Returns (train, test, w_true or None) for one split."""
    seed = config.seed + split
    names = presets()
    if config.dataset in names:
        spec = names[config.dataset]
        spec = SyntheticSpec(**{**spec.to_payload(), "seed": seed,
                                "per_task_n": tuple(spec.per_task_n)})
        loss = config.loss
        train, test, w_true = gen_synthetic(spec, lam=config.lam, loss=loss)
        return train, test, w_true
    loss = config.loss or SQUARED
    full = load_problem(config.dataset, lam=config.lam, loss=loss)
    train, test = _shuffle_split(full, seed, config.test_fraction)
    return train, test, None


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: dict
    loss: str
    trace: list
    weights: list
    sigma: list | None
    correlation: list | None
    final_gap: float
    comm_rounds: int
    evals: list
    eval_summary: dict

    def to_payload(self) -> dict:
        return {
            "config": self.config, "loss": self.loss, "trace": self.trace,
            "weights": self.weights, "sigma": self.sigma,
            "correlation": self.correlation, "final_gap": self.final_gap,
            "comm_rounds": self.comm_rounds, "evals": self.evals,
            "eval_summary": self.eval_summary,
        }


def correlation_from_sigma(sigma: np.ndarray) -> np.ndarray:
    diag = np.sqrt(np.clip(np.diag(sigma), 0.0, None))
    denom = np.outer(diag, diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0, sigma / np.where(denom > 0, denom, 1.0), 0.0)
    return corr


def _run_one(config: ExperimentConfig, split: int):
    train, test, _ = resolve_dataset(config, split)
    rc = config.run_config(seed=config.seed + split)
    if config.mode == "dmtrl":
        state, cov, traces = run_dmtrl(train, rc)
    elif config.mode == "stl":
        state, traces = run_stl(train, rc)
        cov = None
    else:
        state, cov, traces = run_ssdca(train, rc)
    report = evaluate(state.w, test)
    return state, cov, traces, report


def execute(config: ExperimentConfig) -> ExperimentResult:
    """Run all splits; split 0 supplies the trace and matrices."""
    evals = []
    first = None
    for s in range(config.splits):
        state, cov, traces, report = _run_one(config, s)
        evals.append(report)
        if s == 0:
            first = (state, cov, traces)
    state, cov, traces = first
    loss = evals[0].loss

    keys = sorted({k for r in evals for k in ([r.metric] + list(r.extras))})
    summary = {}
    for k in keys:
        vals = [r.pooled if k == r.metric else r.extras.get(k) for r in evals]
        vals = [v for v in vals if v is not None]
        summary[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}

    sigma = cov.sigma.tolist() if cov is not None else None
    corr = (correlation_from_sigma(cov.sigma).tolist() if cov is not None else None)
    return ExperimentResult(
        config=config.to_payload(), loss=loss,
        trace=[t.to_payload() for t in traces],
        weights=state.w.tolist(), sigma=sigma, correlation=corr,
        final_gap=traces[-1].gap, comm_rounds=traces[-1].comm_rounds,
        evals=[r.to_payload() for r in evals], eval_summary=summary,
    )


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def _g(x: float) -> str:
    return "%.17g" % float(x)


def _write_matrix(path: str, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(_g(v) for v in row) + "\n")


def write_artifacts(payload: dict, out_dir: str, svg: bool = False) -> list:
    """Write the CSV (and optional SVG) artifact set from a result payload.

    Works on the wire form (plain dicts/lists) so the client can persist
    a remote run's response byte-for-byte identically to a local one.
    Returns the list of files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "trace.csv")
    with open(path, "w") as fh:
        fh.write("p,t,dual,primal,gap,elapsed_ms,comm_rounds\n")
        for row in payload["trace"]:
            fh.write(f'{row["p"]},{row["t"]},{_g(row["dual"])},{_g(row["primal"])},'
                     f'{_g(row["gap"])},{_g(row["elapsed_ms"])},{row["comm_rounds"]}\n')
    written.append(path)

    w = payload["weights"]
    path = os.path.join(out_dir, "weights.csv")
    _write_matrix(path, zip(*w))     # d rows, one column per task
    written.append(path)

    if payload.get("sigma") is not None:
        path = os.path.join(out_dir, "sigma.csv")
        _write_matrix(path, payload["sigma"])
        written.append(path)
        path = os.path.join(out_dir, "correlation.csv")
        _write_matrix(path, payload["correlation"])
        written.append(path)

    path = os.path.join(out_dir, "eval.csv")
    with open(path, "w") as fh:
        fh.write("split,metric,value\n")
        for s, r in enumerate(payload["evals"]):
            fh.write(f'{s},{r["metric"]},{_g(r["pooled"])}\n')
            for k, v in sorted(r["extras"].items()):
                fh.write(f"{s},{k},{_g(v)}\n")
        for k, stats in sorted(payload["eval_summary"].items()):
            fh.write(f'mean,{k},{_g(stats["mean"])}\n')
            fh.write(f'std,{k},{_g(stats["std"])}\n')
    written.append(path)

    if svg:
        from .charts import gap_chart
        rounds = [row["t"] for row in payload["trace"]]
        times = [row["elapsed_ms"] for row in payload["trace"]]
        gaps = [row["gap"] for row in payload["trace"]]
        path = os.path.join(out_dir, "gap_rounds.svg")
        with open(path, "w") as fh:
            fh.write(gap_chart(rounds, gaps, "round", "certified gap"))
        written.append(path)
        path = os.path.join(out_dir, "gap_time.svg")
        with open(path, "w") as fh:
            fh.write(gap_chart(times, gaps, "simulated ms", "certified gap"))
        written.append(path)
    return written
