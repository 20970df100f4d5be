"""Direct minimization of MaxErr over the 2d root parameters for a fixed n.

The objective is the product of the two closed-form norms as a function of
(theta, theta_hat), plus a small log-barrier keeping theta and the derived
C-side residues strictly positive (residues change sign exactly when roots
collide or cross, so the barrier also keeps the two root ladders interlaced).

Gradients are exact: every building block (geometric sums, residues, norms)
is complex-safe, so a 1e-20 imaginary step gives the derivative to machine
precision with none of the cancellation of finite differences.  The search
runs in logit space (an unconstrained reparameterization of (0,1)) with a
dense BFGS inverse-Hessian estimate and Armijo backtracking, accepting only
loss decreases and returning the best iterate seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .error_eval import (
    matousek_lb,
    opt_lt_toe,
    rownorm_closed,
    sensitivity_closed,
)
from .params import BltFactorization, blt_coeffs, residues_from_roots
from .seq import ltt_dense, series_reciprocal

_CSTEP = 1e-20
_ARMIJO_C1 = 1e-4
_MAX_BACKTRACKS = 60


@dataclass
class OptConfig:
    degree: int
    n: int
    max_iters: int = 500
    grad_tol: float = 1e-9
    barrier_weight: float = 1e-7
    init: object = "geometric_ladder"
    collision_eps: float = 1e-9

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")


@dataclass
class OptResult:
    factorization: BltFactorization
    final_loss: float
    final_max_err: float
    iterations: int
    converged: bool


def geometric_ladder(degree: int, n: int):
    """Default initialization: poles approach 1 on a ratio-1/4 ladder with the
    C-side roots offset a fraction 1/(2 sqrt(n)) of each pole's gap to 1, which
    interlaces the two ladders (all derived C-side residues positive)."""
    i = np.arange(degree)
    c = 1.0 / math.sqrt(n)
    theta = 1.0 - c * 0.25**i
    theta_hat = theta + (1.0 - theta) / (2.0 * math.sqrt(n))
    return theta, theta_hat


def _loss_core(theta, theta_hat, n: int, barrier_weight: float):
    """Loss on (possibly complex) interior parameters; no validation."""
    omega, omega_hat = residues_from_roots(theta, theta_hat)
    value = sensitivity_closed(omega_hat, theta_hat, n) * rownorm_closed(
        omega, theta, n
    )
    if barrier_weight != 0.0:
        if np.any(np.real(omega_hat) <= 0.0):
            return math.inf
        value = value + barrier_weight * (
            -np.sum(np.log(theta)) - np.sum(np.log(omega_hat))
        )
    return value


def loss(theta, theta_hat, n: int, barrier_weight: float) -> float:
    """Barrier-augmented MaxErr; +inf outside the feasible region."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=np.float64))
    if theta.shape != theta_hat.shape or theta.ndim != 1:
        raise ValueError("theta and theta_hat must be 1-d arrays of equal length")
    for arr in (theta, theta_hat):
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            return math.inf
    try:
        value = _loss_core(theta, theta_hat, n, barrier_weight)
    except ValueError:
        return math.inf
    return float(np.real(value))


def gradient(theta, theta_hat, n: int, barrier_weight: float) -> np.ndarray:
    """Gradient of ``loss`` in the concatenated (theta, theta_hat) parameters.

    Computed by a 1e-20 imaginary step per coordinate; exact to roundoff.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=np.float64))
    if theta.shape != theta_hat.shape or theta.ndim != 1:
        raise ValueError("theta and theta_hat must be 1-d arrays of equal length")
    for arr in (theta, theta_hat):
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("parameters must lie strictly inside (0, 1)")
    d = theta.size
    params = np.concatenate([theta, theta_hat]).astype(np.complex128)
    out = np.empty(2 * d)
    for i in range(2 * d):
        p = params.copy()
        p[i] += 1j * _CSTEP
        val = _loss_core(p[:d], p[d:], n, barrier_weight)
        if not np.isfinite(np.real(val)):
            raise ValueError("loss is infinite at the evaluation point")
        out[i] = np.imag(val) / _CSTEP
    return out


def _sanitize(vec: np.ndarray, eps: float) -> np.ndarray:
    """Separate near-coincident roots by bumping the later one by eps."""
    out = vec.copy()
    order = np.argsort(out)
    for a, b in zip(order[:-1], order[1:]):
        if out[b] - out[a] < 1e-12:
            out[b] = out[a] + eps
    return out


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _validity_recheck(fact: BltFactorization, m: int) -> None:
    r = blt_coeffs(fact.rational(), m).coeffs
    c = series_reciprocal(r)
    b = np.cumsum(r)
    prod = ltt_dense(b) @ ltt_dense(c)
    target = np.tril(np.ones((m, m)))
    if not np.allclose(prod, target, rtol=0.0, atol=1e-6):
        raise RuntimeError("optimized factorization failed the dense BC = A recheck")


def optimize_blt(cfg: OptConfig) -> OptResult:
    """Quasi-Newton minimization of the barrier-augmented MaxErr.

    Runs BFGS in logit space with monotone Armijo backtracking; returns the
    best iterate (converged=False on hitting max_iters is not an error).
    """
    if cfg.init == "geometric_ladder":
        theta0, theta_hat0 = geometric_ladder(cfg.degree, cfg.n)
    else:
        theta0, theta_hat0 = cfg.init
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
        theta_hat0 = np.atleast_1d(np.asarray(theta_hat0, dtype=np.float64))
    if theta0.size != cfg.degree or theta_hat0.size != cfg.degree:
        raise ValueError("initialization size does not match degree")
    d = cfg.degree
    n = cfg.n
    w = cfg.barrier_weight

    def params_of(x):
        p = _sigmoid(x)
        return _sanitize(p[:d], cfg.collision_eps), _sanitize(p[d:], cfg.collision_eps)

    def f_of(x):
        th, thh = params_of(x)
        return loss(th, thh, n, w)

    x = _logit(np.concatenate([theta0, theta_hat0]))
    f_cur = f_of(x)
    if not np.isfinite(f_cur):
        raise ValueError("initialization is infeasible (infinite loss)")
    best_f, best_x = f_cur, x.copy()

    H = np.eye(2 * d)
    prev_x = prev_g = None
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        th, thh = params_of(x)
        try:
            g_p = gradient(th, thh, n, w)
        except ValueError:
            break
        if np.max(np.abs(g_p)) <= cfg.grad_tol:
            converged = True
            break
        p_all = np.concatenate([th, thh])
        g_x = g_p * p_all * (1.0 - p_all)
        if prev_x is not None:
            s = x - prev_x
            yv = g_x - prev_g
            sy = s @ yv
            if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yv):
                rho = 1.0 / sy
                V = np.eye(2 * d) - rho * np.outer(s, yv)
                H = V @ H @ V.T + rho * np.outer(s, s)
        direction = -H @ g_x
        slope = direction @ g_x
        if slope >= 0.0:
            H = np.eye(2 * d)
            direction = -g_x
            slope = -(g_x @ g_x)
        alpha = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            x_new = x + alpha * direction
            f_new = f_of(x_new)
            if f_new <= f_cur + _ARMIJO_C1 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        prev_x, prev_g = x, g_x
        x, f_cur = x_new, f_new
        if f_cur < best_f:
            best_f, best_x = f_cur, x.copy()

    th, thh = params_of(best_x)
    final_max_err = loss(th, thh, n, 0.0)
    ratio = final_max_err / opt_lt_toe(n)
    fact = BltFactorization(
        th,
        thh,
        n,
        method="opt",
        meta={"n_target": n, "iterations": iterations, "final_ratio": ratio},
    )
    _validity_recheck(fact, min(n, 64))
    if final_max_err < matousek_lb(n) - 1e-9:
        raise RuntimeError("MaxErr below the lower bound; evaluation is inconsistent")
    return OptResult(
        factorization=fact,
        final_loss=float(best_f),
        final_max_err=float(final_max_err),
        iterations=iterations,
        converged=converged,
    )
