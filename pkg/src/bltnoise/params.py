"""Degree-d rational generating functions and factorization parameterizations.

A factorization A = B C of the all-ones lower-triangular matrix is stored by
the 2d real parameters (theta, theta_hat): the inverse-C generator is

    r(x) = prod_i (1 - theta_hat_i x) / prod_i (1 - theta_i x)
         = 1 + x * sum_i omega_i / (1 - theta_i x),

with residues omega derived in closed form.  C's own generator is 1/r and B's
is r(x)/(1 - x), so B-side coefficients are prefix sums of r's.  This module
converts among pole/residue, polynomial-coefficient, and matrix-power forms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seq import ToeplitzSeq

_METHODS = ("ra", "opt", "degree1", "manual")

# Above this degree, real-input residue products switch to log-space to avoid
# overflow of individual factors (the result itself stays representable).
_LOGSPACE_DEGREE = 32

_COEFF_CHUNK = 1 << 16


@dataclass(frozen=True)
class RationalBlt:
    """Pole/residue form of a degree-d rational generator.

    Coefficients follow ``r_0 = t`` and ``r_k = sum_j omega_j theta_j^{k-1}``
    for ``k >= 1``; canonical factorization generators have ``t = 1``.
    """

    theta: np.ndarray
    omega: np.ndarray
    t: float = 1.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))
        omega = np.atleast_1d(np.asarray(self.omega, dtype=np.float64))
        if theta.shape != omega.shape or theta.ndim != 1:
            raise ValueError("theta and omega must be 1-d arrays of equal length")
        if theta.size:
            if not (np.all(theta > 0.0) and np.all(theta <= 1.0)):
                raise ValueError("theta entries must lie in (0, 1]")
            if np.unique(theta).size != theta.size:
                raise ValueError("theta entries must be pairwise distinct")
        if not (np.all(np.isfinite(omega)) and np.isfinite(self.t)):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "omega", omega)

    @property
    def degree(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class MatrixPowerForm:
    """Constant-recurrent representation ``r_k = u^T W^k v + t * [k == 0]``."""

    u: np.ndarray
    W: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=np.float64))
        v = np.atleast_1d(np.asarray(self.v, dtype=np.float64))
        W = np.asarray(self.W, dtype=np.float64)
        if W.size == 0:
            W = W.reshape(0, 0)
        if u.size == 0:
            u = u.reshape(0)
        if v.size == 0:
            v = v.reshape(0)
        d = u.size
        if v.size != d or W.shape != (d, d):
            raise ValueError("u, v must be d-vectors and W a d x d matrix")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "W", W)

    @property
    def dim(self) -> int:
        return self.u.size

    def coeffs(self, n: int) -> ToeplitzSeq:
        """First ``n`` coefficients by iterating ``w <- W w``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        out = np.zeros(n)
        if self.dim == 0:
            out[0] = self.t
            return ToeplitzSeq(out)
        w = self.v.copy()
        out[0] = self.u @ w + self.t
        for k in range(1, n):
            w = self.W @ w
            out[k] = self.u @ w
        return ToeplitzSeq(out)


def blt_coeffs(b: RationalBlt, n: int) -> ToeplitzSeq:
    """First ``n`` coefficients of ``b`` from the pole/residue closed form, O(n d)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(n)
    out[0] = b.t
    if b.degree == 0:
        out[1:] = 0.0
        return ToeplitzSeq(out)
    for k0 in range(1, n, _COEFF_CHUNK):
        k1 = min(k0 + _COEFF_CHUNK, n)
        powers = b.theta[None, :] ** np.arange(k0 - 1, k1 - 1)[:, None]
        out[k0:k1] = powers @ b.omega
    return ToeplitzSeq(out)


def diagonal_power_form(b: RationalBlt) -> MatrixPowerForm:
    """Diagonal matrix-power form: ``u = 1``, ``W = diag(theta)``, ``v = omega/theta``."""
    v = b.omega / b.theta if b.degree else np.zeros(0)
    t = b.t - v.sum()
    return MatrixPowerForm(np.ones(b.degree), np.diag(b.theta), v, t)


def _trim(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
    nz = np.nonzero(arr)[0]
    if nz.size == 0:
        return arr[:1]
    return arr[: nz[-1] + 1]


def companion_form(p_coeffs, q_coeffs) -> MatrixPowerForm:
    """Matrix-power form of ``r(x) = p(x)/q(x)`` with ``q_0 = 1``.

    The additive constant is split off first (``r = t + pbar/q`` with
    ``deg pbar < deg q``); ``W`` is the companion matrix whose spectrum is the
    reciprocals of ``q``'s roots (plus zero padding when ``q``'s leading
    coefficients vanish).
    """
    p = _trim(p_coeffs)
    q = _trim(q_coeffs)
    if q[0] != 1.0:
        raise ValueError("q_0 must equal 1")
    deg_p, deg_q = p.size - 1, q.size - 1
    if deg_p > deg_q:
        raise ValueError("numerator degree exceeds denominator degree")
    d = deg_q
    if deg_p == deg_q:
        t = p[-1] / q[-1]
        pbar = (p - t * q)[:d]
    else:
        t = 0.0
        pbar = p
    v = np.zeros(d)
    v[: pbar.size] = pbar
    W = np.zeros((d, d))
    if d:
        W[:, 0] = -q[1:]
        W[np.arange(d - 1), np.arange(1, d)] = 1.0
    return MatrixPowerForm(np.eye(d, 1).ravel() if d else np.zeros(0), W, v[:d], t)


def reciprocal_matrix_form(f: MatrixPowerForm, beta: int) -> MatrixPowerForm:
    """Matrix-power form of ``1/r(x)`` (beta=0) or ``1/(r(x)(1-x))`` (beta=1).

    The additive constant of ``f`` is absorbed by zero-padding, the generator
    is normalized so its constant term is 1, and the output has dimension one
    larger than the (padded) input.
    """
    if beta not in (0, 1):
        raise ValueError("beta must be 0 or 1")
    u, W, v, t = f.u, f.W, f.v, f.t
    if t != 0.0:
        d = u.size
        W = np.block([[W, np.zeros((d, 1))], [np.zeros((1, d)), np.zeros((1, 1))]])
        u = np.append(u, 1.0)
        v = np.append(v, t)
    r0 = float(u @ v) if u.size else 0.0
    if r0 == 0.0:
        raise ValueError("generator has zero constant term; cannot normalize")
    v = v / r0
    d = u.size
    uW = u @ W
    M = W - np.outer(v, uW)
    Wt = np.zeros((d + 1, d + 1))
    Wt[0, 0] = float(beta)
    Wt[1:, 0] = v
    Wt[1:, 1:] = M
    ut = np.concatenate(([1.0], -uW)) / r0
    vt = np.zeros(d + 1)
    vt[0] = 1.0
    return MatrixPowerForm(ut, Wt, vt, 0.0)


def residues_from_roots(theta, theta_hat):
    """Residues of ``r = prod(1 - theta_hat x)/prod(1 - theta x)`` and of ``1/r``.

    Closed form: ``omega_i = theta_i * prod_k (1 - theta_hat_k/theta_i)
    / prod_{j != i} (1 - theta_j/theta_i)``, and symmetrically for
    ``omega_hat`` with the two root sets swapped.  Repeated roots within a
    vector are rejected (the denominator vanishes); a shared root *between*
    the vectors simply zeroes the corresponding residue.

    Accepts complex inputs (used by step-differentiation); real inputs of
    degree > 32 are evaluated in log-space so that individual factors cannot
    overflow.
    """
    theta = np.atleast_1d(np.asarray(theta))
    theta_hat = np.atleast_1d(np.asarray(theta_hat))
    if theta.shape != theta_hat.shape or theta.ndim != 1:
        raise ValueError("theta and theta_hat must be 1-d arrays of equal length")
    d = theta.size
    if d == 0:
        return np.zeros(0), np.zeros(0)
    for name, arr in (("theta", theta), ("theta_hat", theta_hat)):
        if np.any(arr == 0):
            raise ValueError(f"{name} contains a zero root")
        if np.unique(arr).size != d:
            raise ValueError(f"{name} contains repeated roots")
    omega = _residues_one_side(theta, theta_hat)
    omega_hat = _residues_one_side(theta_hat, theta)
    return omega, omega_hat


def _residues_one_side(poles, zeros):
    d = poles.size
    num = 1.0 - zeros[None, :] / poles[:, None]
    den = 1.0 - poles[None, :] / poles[:, None]
    np.fill_diagonal(den, 1.0)
    if d <= _LOGSPACE_DEGREE or np.iscomplexobj(poles) or np.iscomplexobj(zeros):
        return poles * num.prod(axis=1) / den.prod(axis=1)
    sign = np.prod(np.sign(num), axis=1) * np.prod(np.sign(den), axis=1)
    zero_num = np.any(num == 0.0, axis=1)
    with np.errstate(divide="ignore"):
        log_mag = (
            np.log(np.abs(poles))
            + np.log(np.abs(num)).sum(axis=1)
            - np.log(np.abs(den)).sum(axis=1)
        )
    out = sign * np.exp(log_mag)
    out[zero_num] = 0.0
    return out


class BltFactorization:
    """A matched factor pair stored by its 2d root parameters plus a target n.

    ``theta`` are the inverse-C generator's pole reciprocals (B side),
    ``theta_hat`` its zeros (C side); residues are derived on demand.
    Constructions whose roots cannot be resolved at float64 (the rational
    approximation at large degree) carry their analytically exact B-side
    residues as an override; overrides are never serialized.
    """

    def __init__(self, theta, theta_hat, n, method="manual", omega_override=None, meta=None):
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=np.float64))
        if theta.ndim != 1 or theta.shape != theta_hat.shape:
            raise ValueError("theta and theta_hat must be 1-d arrays of equal length")
        for name, arr in (("theta", theta), ("theta_hat", theta_hat)):
            if arr.size and not (np.all(arr > 0.0) and np.all(arr <= 1.0)):
                raise ValueError(f"{name} entries must lie in (0, 1]")
            if np.unique(arr).size != arr.size:
                raise ValueError(f"{name} entries must be pairwise distinct")
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise ValueError("n must be a positive integer")
        if method not in _METHODS:
            raise ValueError(f"unknown method {method!r}")
        self.theta = theta
        self.theta_hat = theta_hat
        self.n = int(n)
        self.method = method
        self.meta = dict(meta) if meta else {}
        self._omega = None if omega_override is None else np.asarray(omega_override, dtype=np.float64)
        self._omega_hat = None

    @property
    def degree(self) -> int:
        return self.theta.size

    @property
    def omega(self) -> np.ndarray:
        if self._omega is None:
            self._omega, self._omega_hat = residues_from_roots(self.theta, self.theta_hat)
        return self._omega

    @property
    def omega_hat(self) -> np.ndarray:
        if self._omega_hat is None:
            om, self._omega_hat = residues_from_roots(self.theta, self.theta_hat)
            if self._omega is None:
                self._omega = om
        return self._omega_hat

    def rational(self) -> RationalBlt:
        """Pole/residue form of the inverse-C generator r(x)."""
        return RationalBlt(self.theta, self.omega, 1.0)

    def to_json_dict(self) -> dict:
        meta = {"method": self.method, "version": 1}
        meta.update(self.meta)
        return {
            "degree": self.degree,
            "theta": self.theta.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "n": self.n,
            "meta": meta,
        }

    def __repr__(self):
        return (
            f"BltFactorization(degree={self.degree}, n={self.n}, method={self.method!r})"
        )


def degree1_closed_form(n: int) -> BltFactorization:
    """Closed-form single-pole factorization for a target horizon ``n``.

    Sets the C-generator to ``1 + a^2 x / (1 - lam x)`` with
    ``lam = 1 - n^(-2/3)`` and ``a^2 = n^(-1/3) (1 - n^(-1/3))``; its inverse
    is ``1 - a^2 x / (1 - (lam - a^2) x)``, so theta = lam - a^2 and
    theta_hat = lam.  Squared sensitivity is bounded by 1 + a^4/(1 - lam^2).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    lam = 1.0 - n ** (-2.0 / 3.0)
    a2 = n ** (-1.0 / 3.0) * (1.0 - n ** (-1.0 / 3.0))
    return BltFactorization([lam - a2], [lam], n, method="degree1")


def save_factorization(fact: BltFactorization, path, extra_meta=None) -> None:
    payload = fact.to_json_dict()
    if extra_meta:
        payload["meta"].update(extra_meta)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_factorization(path) -> BltFactorization:
    """Load a factorization, regenerating exact parameters for constructions.

    Files with ``meta.method == "ra"`` are rebuilt from (degree, n) so the
    analytically exact residues are available, then checked against the stored
    roots.
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("degree", "theta", "theta_hat", "n", "meta"):
        if key not in payload:
            raise ValueError(f"factorization file missing field {key!r}")
    meta = payload["meta"]
    method = meta.get("method", "manual")
    theta = np.asarray(payload["theta"], dtype=np.float64)
    theta_hat = np.asarray(payload["theta_hat"], dtype=np.float64)
    if len(theta) != payload["degree"] or len(theta_hat) != payload["degree"]:
        raise ValueError("degree field does not match stored roots")
    if method == "ra":
        from .rational import ra_blt_build

        fact = ra_blt_build(payload["degree"], payload["n"])
        if not np.allclose(fact.theta, theta, rtol=0, atol=1e-12):
            raise ValueError("stored roots do not match the regenerated construction")
        fact.meta.update({k: v for k, v in meta.items() if k not in ("method", "version")})
        return fact
    extra = {k: v for k, v in meta.items() if k not in ("method", "version")}
    return BltFactorization(theta, theta_hat, payload["n"], method=method, meta=extra)
