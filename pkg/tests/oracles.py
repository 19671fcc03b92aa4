"""Independent reference implementations used to pin the fast paths.

Everything here is written from the mathematical definitions with naive
loops and generic numeric search, deliberately sharing no code with the
package: the package is checked against these, never the other way
around.
"""

from __future__ import annotations

import numpy as np

INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Generic 1-D maximization
# ---------------------------------------------------------------------------

def golden_section_max(f, lo: float, hi: float, iters: int = 200) -> float:
    """Maximizer of a unimodal f on [lo, hi] by golden-section search."""
    a, b = float(lo), float(hi)
    c = b - INV_GOLDEN * (b - a)
    d = a + INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Literal loss definitions
# ---------------------------------------------------------------------------

def loss_value(kind: str, a: float, y: float) -> float:
    if kind == "hinge":
        return max(0.0, 1.0 - y * a)
    return (a - y) ** 2


def conjugate_value(kind: str, u: float, y: float) -> float:
    """l*(u); +inf outside the hinge domain (oracle-side float inf is fine,
    nothing here sums blindly)."""
    if kind == "hinge":
        t = u * y
        if t < -1.0 or t > 0.0:
            return np.inf
        return t
    return u * u / 4.0 + u * y


def coordinate_objective(kind: str, a_cur: float, y: float, wx: float,
                         vx: float, q: float, n_i: int, rho: float,
                         sigma_ii: float, lam: float):
    """The damped local objective restricted to one coordinate, as a
    callable of the step delta (positive scaling dropped; the maximizer
    is what matters)."""
    c = rho * sigma_ii / (lam * n_i)

    def f(delta: float) -> float:
        total = a_cur + delta
        conj = conjugate_value(kind, -total, y)
        if not np.isfinite(conj):
            return -np.inf
        return -conj - delta * wx - c * (delta * vx + 0.5 * q * delta * delta)

    return f


def best_coordinate_delta(kind: str, a_cur: float, y: float, wx: float,
                          vx: float, q: float, n_i: int, rho: float,
                          sigma_ii: float, lam: float) -> float:
    """Golden-section maximizer of the coordinate restriction.

    Comparison-based search alone bottoms out near sqrt(machine-eps)
    around a smooth maximum, so the located bracket is finished with one
    parabolic vertex fit (the restriction is exactly quadratic inside
    the feasible interval), clamped back to the interval.
    """
    f = coordinate_objective(kind, a_cur, y, wx, vx, q, n_i, rho, sigma_ii, lam)
    if kind == "hinge":
        lo, hi = (0.0, 1.0) if y > 0 else (-1.0, 0.0)
        lo, hi = lo - a_cur, hi - a_cur
    else:
        radius = (2.0 * (abs(y) + 0.5 * abs(a_cur) + abs(wx))
                  + abs(vx) / max(q, 1e-12) + 10.0)
        lo, hi = -radius, radius
    x0 = golden_section_max(f, lo, hi, iters=120)
    h = max(1e-3 * (hi - lo), 1e-9)
    xc = min(max(x0, lo + h), hi - h)
    fm, f0, fp = f(xc - h), f(xc), f(xc + h)
    denom = fp - 2.0 * f0 + fm
    if denom < 0.0:
        x0 = xc - 0.5 * h * (fp - fm) / denom
    return min(max(x0, lo), hi)


# ---------------------------------------------------------------------------
# Brute-force global dual via the full coupling matrix
# ---------------------------------------------------------------------------

def flatten_alpha(alpha: list) -> np.ndarray:
    return np.concatenate([np.asarray(a, float) for a in alpha])


def brute_coupling_matrix(problem, sigma: np.ndarray) -> np.ndarray:
    """The full N x N quadratic coupling over all samples of all tasks:
    entry ((i,j),(i',j')) = sigma[i,i'] / (n_i n_i') <x_j, x_j'>."""
    blocks = []
    for i, ti in enumerate(problem.tasks):
        row = []
        for k, tk in enumerate(problem.tasks):
            row.append(sigma[i, k] / (ti.n_i * tk.n_i) * (ti.features @ tk.features.T))
        blocks.append(row)
    return np.block(blocks)


def brute_quad(problem, sigma: np.ndarray, alpha: list) -> float:
    a = flatten_alpha(alpha)
    return float(a @ brute_coupling_matrix(problem, sigma) @ a)


def naive_weights(problem, sigma: np.ndarray, alpha: list) -> np.ndarray:
    """w_i = (1/lam) sum_k sigma[i,k] (1/n_k) sum_j alpha_j x_j, by loops."""
    m, d = problem.m, problem.d
    w = np.zeros((m, d))
    for i in range(m):
        acc = np.zeros(d)
        for k, tk in enumerate(problem.tasks):
            s = np.zeros(d)
            for j in range(tk.n_i):
                s += alpha[k][j] * tk.features[j]
            acc += sigma[i, k] * s / tk.n_i
        w[i] = acc / problem.lam
    return w


def naive_dual(problem, sigma: np.ndarray, alpha: list) -> float:
    total = -brute_quad(problem, sigma, alpha) / (2.0 * problem.lam)
    for i, t in enumerate(problem.tasks):
        s = 0.0
        for j in range(t.n_i):
            s += conjugate_value(problem.loss, -alpha[i][j], t.labels[j])
        total -= s / t.n_i
    return total


def naive_primal(problem, w: np.ndarray, omega: np.ndarray) -> float:
    total = 0.0
    for i, t in enumerate(problem.tasks):
        s = 0.0
        for j in range(t.n_i):
            s += loss_value(problem.loss, float(t.features[j] @ w[i]), t.labels[j])
        total += s / t.n_i
    reg = 0.0
    for i in range(problem.m):
        for k in range(problem.m):
            reg += omega[i, k] * float(w[i] @ w[k])
    return total + 0.5 * problem.lam * reg


def naive_gap(problem, w: np.ndarray, alpha: list) -> float:
    """Per-sample certificate sum, by loops."""
    total = 0.0
    for i, t in enumerate(problem.tasks):
        s = 0.0
        for j in range(t.n_i):
            z = float(t.features[j] @ w[i])
            s += (loss_value(problem.loss, z, t.labels[j])
                  + conjugate_value(problem.loss, -alpha[i][j], t.labels[j])
                  + alpha[i][j] * z)
        total += s / t.n_i
    return total


def naive_local_objective(kind: str, delta: np.ndarray, alpha: np.ndarray,
                          features: np.ndarray, labels: np.ndarray,
                          w_i: np.ndarray, sigma_ii: float, rho: float,
                          lam: float, m: int, quad_snapshot: float) -> float:
    """Loop evaluation of the damped per-task objective."""
    n = features.shape[0]
    total = 0.0
    for j in range(n):
        total -= conjugate_value(kind, -(alpha[j] + delta[j]), labels[j]) / n
        total -= delta[j] * float(features[j] @ w_i) / n
    v = np.zeros(features.shape[1])
    for j in range(n):
        v += delta[j] * features[j]
    total -= quad_snapshot / (2.0 * lam * m)
    total -= rho * sigma_ii / (2.0 * lam * n * n) * float(v @ v)
    return total


def exact_local_solver(kind: str, alpha: np.ndarray, features: np.ndarray,
                       labels: np.ndarray, w_i: np.ndarray, sigma_ii: float,
                       rho: float, lam: float, tol: float = 1e-12,
                       max_sweeps: int = 20000) -> np.ndarray:
    """Cyclic golden-section coordinate ascent on the damped per-task
    objective, run to stationarity; returns the delta block."""
    n, d = features.shape
    delta = np.zeros(n)
    v = np.zeros(d)
    xw = features @ w_i
    q = np.einsum("ij,ij->i", features, features)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(n):
            step = best_coordinate_delta(kind, float(alpha[j] + delta[j]),
                                         float(labels[j]), float(xw[j]),
                                         float(v @ features[j]), float(q[j]),
                                         n, rho, sigma_ii, lam)
            if step != 0.0:
                delta[j] += step
                v += step * features[j]
                biggest = max(biggest, abs(step))
        if biggest < tol:
            break
    return delta


# ---------------------------------------------------------------------------
# Covariance helpers
# ---------------------------------------------------------------------------

def random_psd_trace1(rng: np.random.Generator, m: int) -> np.ndarray:
    a = rng.standard_normal((m, m + 2))
    s = a @ a.T
    return s / np.trace(s)


def coupling_objective(w: np.ndarray, sigma: np.ndarray) -> float:
    """tr(w.T-style coupled regularizer) against the inverse of sigma,
    via solve (no explicit inverse)."""
    return float(np.trace(w.T @ np.linalg.solve(sigma, w)))
