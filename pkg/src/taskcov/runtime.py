"""Synchronous training drivers and the worker/server wire protocol.

Execution model
---------------
One process simulates the fleet: per round every task's solver runs (on
a thread pool of configurable size), results cross a barrier as encoded
``WorkerUpdateMsg`` frames, the server folds them in, and encoded
``ServerBroadcastMsg`` frames carry each task's refreshed predictor
back.  The byte format is the only worker/server channel, so a socket
transport is a drop-in replacement.

Simulated time
--------------
Traces must be byte-identical across identical runs, which rules out
wall-clock measurement.  ``elapsed_ms`` instead comes from a
deterministic cost model, in nanoseconds:

* one coordinate step costs ``4 * d``
* one certificate evaluation pass costs ``6 * n_i * d`` per task
* one synchronous round adds ``ROUND_OVERHEAD_NS`` (barrier + transfer)
* a covariance refit costs ``m*m*d + 50*m**3``

A distributed round advances by the slowest worker plus overhead; the
single-machine driver advances by the sum of all work and no overhead.
``wall_micros`` in worker messages is that worker's own accumulated
compute time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import struct

import numpy as np

from .core import (MultiTaskProblem, DualState, TaskCovariance, RunConfig,
                   EngineError, ConfigError, validate_problem, derive_seed,
                   RHO_AFFINITY)
from .local_solver import LocalRoundInput, local_sdca
from .losses import coordinate_delta
from .objectives import duality_gap, weights_from_duals
from .server import (AggregationState, aggregate_round, omega_step, rho_bound,
                     ZeroWeights)

STEP_NS_PER_DIM = 4
GAP_NS_PER_CELL = 6
ROUND_OVERHEAD_NS = 1_000_000

WORKER_UPDATE_TAG = 1
SERVER_BROADCAST_TAG = 2

_HEADER = struct.Struct("<BIII")
_TRAILER = struct.Struct("<dd")


class BadTag(EngineError):
    """Leading byte is not a known message tag."""


class TruncatedFrame(EngineError):
    """Buffer length does not match what the header demands."""


@dataclass
class WorkerUpdateMsg:
    task_id: int
    round_index: int
    delta_b: np.ndarray
    local_obj_gain: float
    wall_micros: int


@dataclass
class ServerBroadcastMsg:
    task_id: int
    round_index: int
    w_i: np.ndarray
    sigma_ii: float
    rho: float


def encode_msg(msg) -> bytes:
    """Frame layout, little-endian throughout:

    u8 tag | u32 task_id | u32 round | u32 d | d x f64 payload | 2 x f64

    The two trailing floats are (local_obj_gain, wall_micros) for worker
    updates and (sigma_ii, rho) for broadcasts.
    """
    if isinstance(msg, WorkerUpdateMsg):
        tag, vec = WORKER_UPDATE_TAG, msg.delta_b
        tail = (msg.local_obj_gain, float(msg.wall_micros))
    elif isinstance(msg, ServerBroadcastMsg):
        tag, vec = SERVER_BROADCAST_TAG, msg.w_i
        tail = (msg.sigma_ii, msg.rho)
    else:
        raise BadTag(f"cannot encode {type(msg).__name__}")
    vec = np.ascontiguousarray(vec, dtype="<f8")
    return (_HEADER.pack(tag, msg.task_id, msg.round_index, vec.shape[0])
            + vec.tobytes() + _TRAILER.pack(*tail))


def decode_msg(buf: bytes):
    if len(buf) < 1:
        raise TruncatedFrame("empty buffer")
    tag = buf[0]
    if tag not in (WORKER_UPDATE_TAG, SERVER_BROADCAST_TAG):
        raise BadTag(f"unknown tag {tag}")
    if len(buf) < _HEADER.size:
        raise TruncatedFrame(f"{len(buf)} bytes, header needs {_HEADER.size}")
    _, task_id, round_index, d = _HEADER.unpack_from(buf, 0)
    expect = _HEADER.size + 8 * d + _TRAILER.size
    if len(buf) != expect:
        raise TruncatedFrame(f"{len(buf)} bytes, header demands {expect}")
    vec = np.frombuffer(buf, dtype="<f8", count=d, offset=_HEADER.size).copy()
    a, b = _TRAILER.unpack_from(buf, _HEADER.size + 8 * d)
    if tag == WORKER_UPDATE_TAG:
        return WorkerUpdateMsg(task_id, round_index, vec, a, int(b))
    return ServerBroadcastMsg(task_id, round_index, vec, a, b)


@dataclass
class RoundTrace:
    """One certificate evaluation.  ``touches`` counts cumulative
    coordinate steps (all tasks); it is bookkeeping for fair
    work-axis comparisons and is not part of the CSV trace schema."""

    p: int
    t: int
    dual: float
    primal: float
    gap: float
    elapsed_ms: float
    comm_rounds: int
    touches: int

    def to_payload(self) -> dict:
        return {"p": self.p, "t": self.t, "dual": self.dual,
                "primal": self.primal, "gap": self.gap,
                "elapsed_ms": self.elapsed_ms,
                "comm_rounds": self.comm_rounds, "touches": self.touches}


@dataclass
class _Clock:
    """Deterministic simulated time; all fields in integer nanoseconds."""

    global_ns: int = 0
    worker_ns: list = None

    @classmethod
    def fresh(cls, m: int) -> "_Clock":
        return cls(0, [0] * m)

    @property
    def ms(self) -> float:
        return self.global_ns / 1e6


@dataclass
class _Bookkeeping:
    """Cumulative counters threaded through phases of one run."""

    round_index: int = 0
    comm_rounds: int = 0
    touches: int = 0


def _check_eta(m: int, eta: float) -> None:
    if eta < 1.0 / m - 1e-15:
        raise ConfigError(f"eta = {eta} below 1/m = {1.0 / m}; averaging guarantee void")


def _resolve_rho(config: RunConfig, sigma: np.ndarray) -> float:
    if config.rho_mode == RHO_AFFINITY:
        return rho_bound(sigma, config.eta)
    return float(config.rho_fixed)


def _record(traces, p, book, clock, report):
    traces.append(RoundTrace(p=p, t=book.round_index, dual=report.dual,
                             primal=report.primal, gap=report.gap,
                             elapsed_ms=clock.ms, comm_rounds=book.comm_rounds,
                             touches=book.touches))


def _worker_round(inp: LocalRoundInput, data, eta: float, clock_ns: int,
                  round_index: int):
    """One task's share of a round; returns (encoded update, delta_alpha,
    new worker clock).  Runs on the pool."""
    out = local_sdca(inp, data)
    d = data.features.shape[1]
    clock_ns += (inp.H * STEP_NS_PER_DIM * d
                 + GAP_NS_PER_CELL * data.n_i * d)
    msg = WorkerUpdateMsg(task_id=data.task_id, round_index=round_index,
                          delta_b=eta * out.delta_b,
                          local_obj_gain=out.local_obj_gain,
                          wall_micros=clock_ns // 1000)
    return encode_msg(msg), out.delta_alpha, clock_ns


def run_w_step(problem: MultiTaskProblem, sigma: np.ndarray, omega: np.ndarray,
               state: DualState, config: RunConfig, rho: float, *,
               p_index: int = 1, book: _Bookkeeping | None = None,
               clock: _Clock | None = None, pool: ThreadPoolExecutor | None = None,
               traces: list | None = None):
    """Synchronous rounds on the weights with the covariance held fixed.

    Mutates ``state`` in place and returns ``(state, traces)``.  A trace
    row is recorded at entry (the phase baseline) and after every round;
    rounds stop at config.T or once the certified gap falls below
    config.gap_tol.  ``omega`` is carried for callers that want literal
    primal checks; the certificate itself needs sigma only.
    """
    m = problem.m
    _check_eta(m, config.eta)
    book = book if book is not None else _Bookkeeping()
    clock = clock if clock is not None else _Clock.fresh(m)
    traces = traces if traces is not None else []
    eta, lam, loss = config.eta, problem.lam, problem.loss
    agg = AggregationState(b=state.b, w=state.w, round_index=book.comm_rounds)

    report = duality_gap(problem, state, sigma)
    _record(traces, p_index, book, clock, report)
    if report.gap <= config.gap_tol:
        return state, traces

    own_pool = pool is None and config.workers > 1
    if own_pool:
        pool = ThreadPoolExecutor(max_workers=config.workers)
    try:
        for _ in range(config.T):
            book.round_index += 1
            rnd = book.round_index
            inputs = []
            for i, task in enumerate(problem.tasks):
                inputs.append(LocalRoundInput(
                    alpha_block=state.alpha[i], w_i=state.w[i].copy(),
                    sigma_ii=float(sigma[i, i]), rho=rho, H=config.H,
                    rng_seed=derive_seed(config.seed, rnd, i),
                    loss=loss, lam=lam, m=m))

            if pool is not None:
                results = list(pool.map(
                    _worker_round, inputs, problem.tasks,
                    [eta] * m, clock.worker_ns, [rnd] * m))
            else:
                results = [_worker_round(inp, task, eta, ns, rnd)
                           for inp, task, ns in zip(inputs, problem.tasks, clock.worker_ns)]

            # barrier: encoded frames are the only thing the server reads
            round_ns = 0
            for i, (_, delta_alpha, ns) in enumerate(results):
                round_ns = max(round_ns, ns - clock.worker_ns[i])
                clock.worker_ns[i] = ns
                state.alpha[i] += eta * delta_alpha
            updates = sorted((decode_msg(frame) for frame, _, _ in results),
                             key=lambda u: u.task_id)
            aggregate_round(agg, [u.delta_b for u in updates], sigma, lam)

            for i in range(m):
                bmsg = encode_msg(ServerBroadcastMsg(
                    task_id=i, round_index=rnd, w_i=state.w[i],
                    sigma_ii=float(sigma[i, i]), rho=rho))
                decode_msg(bmsg)

            clock.global_ns += round_ns + ROUND_OVERHEAD_NS
            book.comm_rounds += 1
            book.touches += m * config.H
            report = duality_gap(problem, state, sigma)
            _record(traces, p_index, book, clock, report)
            if report.gap <= config.gap_tol:
                break
    finally:
        if own_pool:
            pool.shutdown()
    return state, traces


def _omega_refresh(problem, state, cov, clock):
    """Covariance refit from current predictors, predictor refresh against
    the new sigma, and simulated server cost.  Keeps the previous pair if
    the predictors are all zero."""
    m, d = problem.m, problem.d
    try:
        cov = omega_step(state.w)
    except ZeroWeights:
        return cov
    state.w[...] = weights_from_duals(state.b, cov.sigma, problem.lam)
    clock.global_ns += m * m * d + 50 * m ** 3
    return cov


def run_dmtrl(problem: MultiTaskProblem, config: RunConfig):
    """Full alternating training: P phases of synchronous weight rounds,
    each followed by a covariance refit (unless disabled).

    Returns (state, covariance, traces).  Alternation stops early once a
    phase improves the primal by less than 1e-9.
    """
    validate_problem(problem)
    m = problem.m
    _check_eta(m, config.eta)
    state = DualState.zeros(problem)
    cov = TaskCovariance.initial(m)
    rho = _resolve_rho(config, cov.sigma)
    book, clock = _Bookkeeping(), _Clock.fresh(m)
    traces: list = []
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    prev_primal = None
    try:
        for p in range(1, config.P + 1):
            run_w_step(problem, cov.sigma, cov.omega, state, config, rho,
                       p_index=p, book=book, clock=clock, pool=pool, traces=traces)
            if config.omega_update:
                cov = _omega_refresh(problem, state, cov, clock)
                if config.rho_mode == RHO_AFFINITY:
                    rho = rho_bound(cov.sigma, config.eta)
            cur_primal = traces[-1].primal
            if prev_primal is not None and prev_primal - cur_primal < 1e-9:
                break
            prev_primal = cur_primal
    finally:
        if pool is not None:
            pool.shutdown()
    return state, cov, traces


def run_stl(problem: MultiTaskProblem, config: RunConfig):
    """Independent per-task baseline: identity coupling held fixed.

    With sigma = I/m the coupled objective separates into one ridge-style
    problem per task; the synchronous machinery is reused unchanged with
    rho = eta and no covariance refit.  Returns (state, traces).
    """
    validate_problem(problem)
    state = DualState.zeros(problem)
    cov = TaskCovariance.initial(problem.m)
    _check_eta(problem.m, config.eta)
    state, traces = run_w_step(problem, cov.sigma, cov.omega, state, config,
                               rho=config.eta)
    return state, traces


def run_ssdca(problem: MultiTaskProblem, config: RunConfig):
    """Single-machine exact coordinate ascent on the global dual.

    Coordinates are drawn uniformly over all samples of all tasks; each
    step is an exact maximization of the global dual along that
    coordinate (the damping factor plays no role and the aggregation
    weight is pinned to 1).  Rounds of m*H steps share the trace and
    stopping logic with the distributed drivers; with m = 1 the
    trajectory is bit-identical to the one-worker distributed path on
    the same seed.

    Returns (state, covariance, traces) with the same alternation
    structure as run_dmtrl.
    """
    validate_problem(problem)
    m, d, lam, loss = problem.m, problem.d, problem.lam, problem.loss
    state = DualState.zeros(problem)
    cov = TaskCovariance.initial(m)
    book, clock = _Bookkeeping(), _Clock.fresh(1)
    traces: list = []
    n = problem.n
    n_total = int(n.sum())
    ends = np.cumsum(n)
    starts = ends - n
    eta_eff = 1.0

    prev_primal = None
    for p in range(1, config.P + 1):
        agg = AggregationState(b=state.b, w=state.w, round_index=book.comm_rounds)
        sigma = cov.sigma
        report = duality_gap(problem, state, sigma)
        _record(traces, p, book, clock, report)
        stopped = report.gap <= config.gap_tol
        for _ in range(config.T):
            if stopped:
                break
            book.round_index += 1
            rng = np.random.Generator(np.random.PCG64(
                derive_seed(config.seed, book.round_index, 0)))
            picks = rng.integers(0, n_total, size=m * config.H)
            w_snap = state.w.copy()
            xw = [problem.tasks[i].features @ w_snap[i] for i in range(m)]
            qs = [np.einsum("ij,ij->i", t.features, t.features)
                  for t in problem.tasks]
            V = [np.zeros(d) for _ in range(m)]
            delta = [np.zeros(n[i]) for i in range(m)]
            moved = [False] * m
            for g in picks:
                i = int(np.searchsorted(ends, g, side="right"))
                j = int(g - starts[i])
                X = problem.tasks[i].features
                y = problem.tasks[i].labels
                x = X[j]
                cross = 0.0
                for k in range(m):
                    if k != i and moved[k]:
                        cross += sigma[i, k] / (lam * n[k]) * float(V[k] @ x)
                d_j = coordinate_delta(
                    loss, state.alpha[i][j] + delta[i][j], y[j],
                    xw[i][j] + cross, float(V[i] @ x), qs[i][j],
                    int(n[i]), 1.0, float(sigma[i, i]), lam)
                if d_j != 0.0:
                    delta[i][j] += d_j
                    V[i] += d_j * x
                    moved[i] = True
            for i in range(m):
                state.alpha[i] += eta_eff * delta[i]
            aggregate_round(agg, [eta_eff * (V[i] / n[i]) for i in range(m)],
                            sigma, lam)
            clock.global_ns += (m * config.H * STEP_NS_PER_DIM * d
                                + GAP_NS_PER_CELL * n_total * d)
            book.touches += m * config.H
            report = duality_gap(problem, state, sigma)
            _record(traces, p, book, clock, report)
            stopped = report.gap <= config.gap_tol
        if config.omega_update:
            cov = _omega_refresh(problem, state, cov, clock)
        cur_primal = traces[-1].primal
        if prev_primal is not None and prev_primal - cur_primal < 1e-9:
            break
        prev_primal = cur_primal
    return state, cov, traces


def rounds_to_gap(traces: list, tol: float):
    """First global round index whose recorded gap is <= tol, or None."""
    for r in traces:
        if r.t > 0 and r.gap <= tol:
            return r.t
    return None
