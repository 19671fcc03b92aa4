"""Dataset generation, on-disk formats, and model evaluation.

Synthetic family
----------------
``n_parents`` latent parent vectors are drawn once; parent tasks sit at
the fixed indices ``k * m // n_parents`` and carry the parent vector
exactly.  Every other task copies a uniformly chosen parent, flips its
sign with probability ``negate_prob``, and adds isotropic noise of scale
``noise_scale``.  Labels are either ``logistic`` draws mapped to
{-1, +1} (for hinge training) or a ``linear`` response plus Gaussian
noise (for squared training).  Everything is driven by one generator
seeded from ``spec.seed``, so a spec reproduces its data exactly.

On-disk layout
--------------
A problem is a directory with a ``manifest.txt``:

    format dense
    d 28
    task 0 task_000.txt
    task 1 task_001.txt
    ...

Dense task files have one sample per line: the label followed by d
feature values.  Sparse task files have the label followed by
``index:value`` pairs (0-based, omitted entries are zero).  Floats are
written with repr-exact precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import os

import numpy as np

from .core import (TaskData, MultiTaskProblem, EngineError, ConfigError,
                   HINGE, SQUARED, derive_seed, validate_problem)

DENSE = "per-task-dense"
SPARSE = "per-task-sparse"
_FORMAT_WORD = {DENSE: "dense", SPARSE: "sparse"}
_WORD_FORMAT = {v: k for k, v in _FORMAT_WORD.items()}


class ParseError(EngineError):
    """A data file line could not be parsed; message carries file and line."""


class ManifestError(EngineError):
    """Manifest missing, malformed, or pointing at absent files."""


@dataclass
class SyntheticSpec:
    """Recipe for one synthetic problem family instance."""

    m: int = 8
    d: int = 50
    n_parents: int = 3
    per_task_n: tuple = (500, 500)
    noise_scale: float = 0.1
    negate_prob: float = 0.5
    label_model: str = "logistic"
    seed: int = 0
    test_fraction: float = 0.43
    label_noise: float = 0.1

    def __post_init__(self):
        if self.m < 1 or self.d < 1 or not (1 <= self.n_parents <= self.m):
            raise ConfigError(f"bad sizes m={self.m} d={self.d} parents={self.n_parents}")
        lo, hi = self.per_task_n
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad per_task_n range {self.per_task_n}")
        if self.label_model not in ("logistic", "linear"):
            raise ConfigError(f"unknown label_model {self.label_model!r}")
        if not (0.0 <= self.negate_prob <= 1.0):
            raise ConfigError(f"negate_prob must be a probability, got {self.negate_prob}")

    def to_payload(self) -> dict:
        return {"m": self.m, "d": self.d, "n_parents": self.n_parents,
                "per_task_n": list(self.per_task_n),
                "noise_scale": self.noise_scale, "negate_prob": self.negate_prob,
                "label_model": self.label_model, "seed": self.seed,
                "test_fraction": self.test_fraction, "label_noise": self.label_noise}

    @classmethod
    def from_payload(cls, payload: dict) -> "SyntheticSpec":
        payload = dict(payload)
        payload["per_task_n"] = tuple(payload["per_task_n"])
        return cls(**payload)


def parent_task_ids(m: int, n_parents: int) -> list:
    """The fixed task indices that carry a parent vector verbatim."""
    return [k * m // n_parents for k in range(n_parents)]


def gen_synthetic(spec: SyntheticSpec, *, lam: float = 1e-2, loss: str | None = None):
    """Draw one instance; returns (train, test, w_true).

    ``w_true`` has one row per task.  The loss defaults to hinge for
    logistic labels and squared for linear labels.
    """
    if loss is None:
        loss = HINGE if spec.label_model == "logistic" else SQUARED
    rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, 0, 0)))
    parents = rng.standard_normal((spec.n_parents, spec.d))
    anchor = parent_task_ids(spec.m, spec.n_parents)

    w_true = np.zeros((spec.m, spec.d))
    for i in range(spec.m):
        if i in anchor:
            w_true[i] = parents[anchor.index(i)]
            continue
        pick = int(rng.integers(spec.n_parents))
        sign = -1.0 if rng.random() < spec.negate_prob else 1.0
        w_true[i] = sign * parents[pick] + spec.noise_scale * rng.standard_normal(spec.d)

    lo, hi = spec.per_task_n
    train_tasks, test_tasks = [], []
    for i in range(spec.m):
        n_train = int(rng.integers(lo, hi + 1))
        n_test = max(1, round(spec.test_fraction * n_train))
        x = rng.standard_normal((n_train + n_test, spec.d))
        z = x @ w_true[i]
        if spec.label_model == "logistic":
            p = 1.0 / (1.0 + np.exp(-z))
            y = np.where(rng.random(n_train + n_test) < p, 1.0, -1.0)
        else:
            y = z + spec.label_noise * rng.standard_normal(n_train + n_test)
        train_tasks.append(TaskData(i, x[:n_train], y[:n_train]))
        test_tasks.append(TaskData(i, x[n_train:], y[n_train:]))

    train = MultiTaskProblem(train_tasks, spec.d, lam, loss)
    test = MultiTaskProblem(test_tasks, spec.d, lam, loss)
    return validate_problem(train), validate_problem(test), w_true


def presets() -> dict:
    """Named synthetic recipes; seeds are filled in by the caller."""
    return {
        "synthetic1": SyntheticSpec(m=16, d=100, n_parents=3,
                                    per_task_n=(1500, 2300), noise_scale=0.1),
        "synthetic2": SyntheticSpec(m=16, d=100, n_parents=1,
                                    per_task_n=(1500, 2300), noise_scale=0.05),
        "synthetic1-small": SyntheticSpec(m=8, d=50, n_parents=3,
                                          per_task_n=(500, 500), noise_scale=0.1),
        "synthetic2-small": SyntheticSpec(m=8, d=50, n_parents=1,
                                          per_task_n=(500, 500), noise_scale=0.05),
        "synthetic-reg-small": SyntheticSpec(m=4, d=10, n_parents=2,
                                             per_task_n=(200, 200),
                                             label_model="linear"),
    }


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_problem(problem: MultiTaskProblem, out_dir: str,
                  fmt: str = DENSE) -> str:
    """Write manifest plus per-task files; returns the manifest path."""
    if fmt not in _FORMAT_WORD:
        raise ConfigError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"format {_FORMAT_WORD[fmt]}", f"d {problem.d}"]
    for t in problem.tasks:
        name = f"task_{t.task_id:03d}.txt"
        lines.append(f"task {t.task_id} {name}")
        with open(os.path.join(out_dir, name), "w") as fh:
            for j in range(t.n_i):
                if fmt == DENSE:
                    row = " ".join(_fmt_float(v) for v in t.features[j])
                else:
                    nz = np.nonzero(t.features[j])[0]
                    row = " ".join(f"{k}:{_fmt_float(t.features[j][k])}" for k in nz)
                fh.write(f"{_fmt_float(t.labels[j])} {row}".rstrip() + "\n")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def _parse_dense(path: str, d: int, task_id: int) -> TaskData:
    labels, rows = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 1:
                raise ParseError(f"{path}:{ln}: expected {d + 1} fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as e:
                raise ParseError(f"{path}:{ln}: {e}") from None
            labels.append(vals[0])
            rows.append(vals[1:])
    if not rows:
        raise ParseError(f"{path}: no samples")
    return TaskData(task_id, np.array(rows), np.array(labels))


def _parse_sparse(path: str, d: int, task_id: int) -> TaskData:
    labels, rows = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = float(parts[0])
                row = np.zeros(d)
                for p in parts[1:]:
                    k, v = p.split(":", 1)
                    k = int(k)
                    if not (0 <= k < d):
                        raise ParseError(f"{path}:{ln}: index {k} outside [0, {d})")
                    row[k] = float(v)
            except (ValueError, IndexError) as e:
                raise ParseError(f"{path}:{ln}: {e}") from None
            labels.append(label)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no samples")
    return TaskData(task_id, np.array(rows), np.array(labels))


def load_problem(path: str, fmt: str | None = None, *, lam: float = 1e-2,
                 loss: str = SQUARED) -> MultiTaskProblem:
    """Load a problem directory (or direct manifest path).

    ``fmt`` overrides the manifest's format word when given; ``lam`` and
    ``loss`` stamp the returned problem (they are training parameters,
    not data properties).
    """
    manifest = path
    if os.path.isdir(path):
        manifest = os.path.join(path, "manifest.txt")
    if not os.path.isfile(manifest):
        raise ManifestError(f"no manifest at {manifest}")
    base = os.path.dirname(manifest)
    d = None
    file_fmt = None
    entries = []
    with open(manifest) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            key = parts[0]
            if key == "format" and len(parts) == 2:
                file_fmt = _WORD_FORMAT.get(parts[1])
                if file_fmt is None:
                    raise ManifestError(f"{manifest}:{ln}: unknown format {parts[1]!r}")
            elif key == "d" and len(parts) == 2:
                try:
                    d = int(parts[1])
                except ValueError:
                    raise ManifestError(f"{manifest}:{ln}: bad dimension {parts[1]!r}") from None
            elif key == "task" and len(parts) == 3:
                try:
                    entries.append((int(parts[1]), parts[2]))
                except ValueError:
                    raise ManifestError(f"{manifest}:{ln}: bad task id {parts[1]!r}") from None
            else:
                raise ManifestError(f"{manifest}:{ln}: unrecognized line {line.rstrip()!r}")
    if d is None or file_fmt is None or not entries:
        raise ManifestError(f"{manifest}: needs format, d, and at least one task line")
    use_fmt = fmt or file_fmt
    if use_fmt not in _FORMAT_WORD:
        raise ConfigError(f"unknown format {use_fmt!r}")
    parse = _parse_dense if use_fmt == DENSE else _parse_sparse
    tasks = []
    for task_id, rel in entries:
        fpath = os.path.join(base, rel)
        if not os.path.isfile(fpath):
            raise ManifestError(f"{manifest}: task file {rel} not found")
        tasks.append(parse(fpath, d, task_id))
    return validate_problem(MultiTaskProblem(tasks, d, lam, loss))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Test metrics; ``metric`` names the headline number ``pooled``
    (error_rate for hinge, rmse for squared).  Pooled values weight
    every sample equally across tasks."""

    loss: str
    metric: str
    pooled: float
    per_task: list
    extras: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {"loss": self.loss, "metric": self.metric, "pooled": self.pooled,
                "per_task": list(self.per_task), "extras": dict(self.extras)}

    @classmethod
    def from_payload(cls, payload: dict) -> "EvalReport":
        return cls(payload["loss"], payload["metric"], payload["pooled"],
                   list(payload["per_task"]), dict(payload["extras"]))


def evaluate(w: np.ndarray, problem: MultiTaskProblem) -> EvalReport:
    """Score per-task predictors (rows of w) on a labeled problem."""
    if w.shape != (problem.m, problem.d):
        raise ConfigError(f"w shape {w.shape} does not match problem "
                          f"({problem.m}, {problem.d})")
    if problem.loss == HINGE:
        per_task, wrong, total = [], 0, 0
        for i, t in enumerate(problem.tasks):
            pred = np.where(t.features @ w[i] >= 0.0, 1.0, -1.0)
            errs = int(np.sum(pred != t.labels))
            per_task.append(errs / t.n_i)
            wrong += errs
            total += t.n_i
        return EvalReport(HINGE, "error_rate", wrong / total, per_task)
    per_task, sq_sum, total = [], 0.0, 0
    resid_all, y_all = [], []
    for i, t in enumerate(problem.tasks):
        resid = t.features @ w[i] - t.labels
        per_task.append(float(np.sqrt(np.mean(resid ** 2))))
        sq_sum += float(resid @ resid)
        total += t.n_i
        resid_all.append(resid)
        y_all.append(t.labels)
    resid_all = np.concatenate(resid_all)
    y_all = np.concatenate(y_all)
    var_y = float(np.var(y_all))
    ev = 1.0 - float(np.var(resid_all)) / var_y if var_y > 0 else 0.0
    return EvalReport(SQUARED, "rmse", float(np.sqrt(sq_sum / total)), per_task,
                      extras={"explained_variance": ev})
