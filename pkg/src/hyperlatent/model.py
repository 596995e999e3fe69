"""Logistic latent embedding model for hypergraph incidence data.

Each hyperlink ``j`` includes vertex ``i`` independently with probability
``sigmoid(theta[j, i])`` where

    theta[j, i] = beta + alpha[i] + F[j] @ Z[i]
                = alpha_dagger[i] + F[j] @ Z[i].

Two parameterizations are supported: the centered one (``ModelParams``,
``sum(alpha) == 0``) and the un-centered one (``UncenteredParams``) that folds
``beta`` into ``alpha_dagger``. Conversion between them is exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import sparse

__all__ = [
    "ModelParams",
    "UncenteredParams",
    "Gradient",
    "RankDeficiencyError",
    "DegenerateSpectrumWarning",
    "sigmoid",
    "sigmoid_prime",
    "log1pexp",
    "logit",
    "theta",
    "prob",
    "hyperlink_probability",
    "log_likelihood",
    "gradient",
    "penalty",
    "penalty_gradient",
    "constraint_residuals",
    "identifiability_transform",
    "sign_pattern",
    "sign_align",
]


class RankDeficiencyError(np.linalg.LinAlgError):
    """A Gram or information matrix is singular."""


class DegenerateSpectrumWarning(RuntimeWarning):
    """Eigenvalues too close to order embedding columns reliably."""


# ---------------------------------------------------------------------------
# Scalar link function
# ---------------------------------------------------------------------------


def sigmoid(x):
    """Overflow-free logistic function.

    Uses ``1 / (1 + e^-x)`` for ``x >= 0`` and ``e^x / (1 + e^x)`` otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0, ex) / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_prime(x):
    """Derivative ``e^x / (1 + e^x)^2``, evaluated without overflow."""
    ax = np.exp(-np.abs(np.asarray(x, dtype=np.float64)))
    out = ax / (1.0 + ax) ** 2
    return out if out.ndim else float(out)


def log1pexp(x):
    """``log(1 + exp(x))`` as ``max(x, 0) + log1p(exp(-|x|))``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Centered parameterization ``(beta, alpha, F, Z)``."""

    beta: float
    alpha: np.ndarray
    F: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1)
        F = _as_matrix(self.F, "F")
        Z = _as_matrix(self.Z, "Z")
        if not np.isfinite(self.beta) or not np.all(np.isfinite(alpha)):
            raise ValueError("beta and alpha must be finite")
        if Z.shape[0] != alpha.size or F.shape[1] != Z.shape[1]:
            raise ValueError(f"inconsistent shapes alpha{alpha.shape} F{F.shape} Z{Z.shape}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Z", Z)

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    def theta(self) -> np.ndarray:
        return self.beta + self.alpha[None, :] + self.F @ self.Z.T

    def uncentered(self) -> "UncenteredParams":
        return UncenteredParams(self.beta + self.alpha, self.F, self.Z)

    def centering_residual(self) -> float:
        return float(max(abs(self.alpha.sum()), np.abs(self.F.sum(axis=0)).max(initial=0.0)))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "alpha": self.alpha, "F": self.F, "Z": self.Z, "K": self.K}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        K = int(d["K"])
        return cls(d["beta"], d["alpha"], np.reshape(d["F"], (-1, K)), np.reshape(d["Z"], (-1, K)))


@dataclass(frozen=True, eq=False)
class UncenteredParams:
    """Un-centered parameterization ``(alpha_dagger, F, Z)``."""

    alpha_dagger: np.ndarray
    F: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha_dagger, dtype=np.float64).reshape(-1)
        F = _as_matrix(self.F, "F")
        Z = _as_matrix(self.Z, "Z")
        if not np.all(np.isfinite(a)):
            raise ValueError("alpha_dagger must be finite")
        if Z.shape[0] != a.size or F.shape[1] != Z.shape[1]:
            raise ValueError(f"inconsistent shapes alpha_dagger{a.shape} F{F.shape} Z{Z.shape}")
        object.__setattr__(self, "alpha_dagger", a)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Z", Z)

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    def theta(self) -> np.ndarray:
        return self.alpha_dagger[None, :] + self.F @ self.Z.T

    def centered(self) -> ModelParams:
        beta = float(self.alpha_dagger.mean())
        return ModelParams(beta, self.alpha_dagger - beta, self.F, self.Z)

    def to_dict(self) -> dict:
        return {"alpha_dagger": self.alpha_dagger, "F": self.F, "Z": self.Z, "K": self.K}

    @classmethod
    def from_dict(cls, d: dict) -> "UncenteredParams":
        K = int(d["K"])
        return cls(d["alpha_dagger"], np.reshape(d["F"], (-1, K)), np.reshape(d["Z"], (-1, K)))


def _uncentered(params) -> UncenteredParams:
    return params.uncentered() if isinstance(params, ModelParams) else params


def _dense(Y, shape=None) -> np.ndarray:
    Y = Y.toarray() if sparse.issparse(Y) else np.asarray(Y)
    Y = Y.astype(np.float64, copy=False)
    if shape is not None and Y.shape != shape:
        raise ValueError(f"incidence shape {Y.shape} does not match parameters {shape}")
    return Y


# ---------------------------------------------------------------------------
# Probabilities and likelihood
# ---------------------------------------------------------------------------


def theta(params, j: int | None = None, i: int | None = None):
    """Natural parameter ``theta[j, i]``, or the full ``m x n`` matrix."""
    u = _uncentered(params)
    if j is None and i is None:
        return u.theta()
    if j is None or i is None:
        raise ValueError("give both j and i, or neither")
    return float(u.alpha_dagger[i] + u.F[j] @ u.Z[i])


def prob(params, j: int | None = None, i: int | None = None):
    return sigmoid(theta(params, j, i))


def hyperlink_probability(params, j: int, e, log: bool = False) -> float:
    """Probability that hyperlink ``j`` is exactly the vertex set ``e``."""
    u = _uncentered(params)
    th = u.alpha_dagger + u.Z @ u.F[j]
    y = np.zeros(u.n)
    y[list(e)] = 1.0
    lp = float(np.sum(y * th - log1pexp(th)))
    return lp if log else float(np.exp(lp))


def log_likelihood(params, Y) -> float:
    u = _uncentered(params)
    Yd = _dense(Y, (u.m, u.n))
    th = u.theta()
    return float(np.sum(Yd * th - log1pexp(th)))


class Gradient(NamedTuple):
    alpha_dagger: np.ndarray
    Z: np.ndarray
    F: np.ndarray


def gradient(params, Y) -> Gradient:
    """Gradient of the log-likelihood in the un-centered parameterization."""
    u = _uncentered(params)
    R = _dense(Y, (u.m, u.n)) - sigmoid(u.theta())
    return Gradient(R.sum(axis=0), R.T @ u.F, R @ u.Z)


# ---------------------------------------------------------------------------
# Identifiability penalty
# ---------------------------------------------------------------------------


def _strict_lower(A: np.ndarray) -> np.ndarray:
    return np.tril(A, k=-1)


def penalty(Z, F, lam: float) -> float:
    """Lagrangian penalty on the identifiability constraints.

    Vanishes exactly when ``F'F/m`` and ``Z'Z/n`` are diagonal and equal
    and ``F`` is column-centered.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Z = np.asarray(Z, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    m, n = F.shape[0], Z.shape[0]
    Sz = Z.T @ Z / n
    Sf = F.T @ F / m
    mu = F.sum(axis=0) / m
    scale = lam * m * n
    return float(
        scale / 8 * np.sum((np.diag(Sz) - np.diag(Sf)) ** 2)
        + scale / 2 * mu @ mu
        + scale / 2 * np.sum(_strict_lower(Sf) ** 2)
        + scale / 2 * np.sum(_strict_lower(Sz) ** 2)
    )


def penalty_gradient(Z, F, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``(d/dZ, d/dF)`` of :func:`penalty`."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Z = np.asarray(Z, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    m, n = F.shape[0], Z.shape[0]
    Sz = Z.T @ Z / n
    Sf = F.T @ F / m
    d = np.diag(Sz) - np.diag(Sf)
    off_z = Sz - np.diag(np.diag(Sz))
    off_f = Sf - np.diag(np.diag(Sf))
    mu = F.sum(axis=0) / m
    g_Z = lam * m / 2 * Z * d + lam * m * Z @ off_z
    g_F = -lam * n / 2 * F * d + lam * n * np.outer(np.ones(m), mu) + lam * n * F @ off_f
    return g_Z, g_F


def constraint_residuals(F, Z) -> dict[str, float]:
    """Largest violations of the identifiability constraints."""
    F = np.asarray(F, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    Sf = F.T @ F / F.shape[0]
    Sz = Z.T @ Z / Z.shape[0]
    return {
        "diag_equality": float(np.abs(np.diag(Sf) - np.diag(Sz)).max()),
        "off_diag_F": float(np.linalg.norm(_strict_lower(Sf))),
        "off_diag_Z": float(np.linalg.norm(_strict_lower(Sz))),
        "F_centering": float(np.abs(F.mean(axis=0)).max()),
    }


# ---------------------------------------------------------------------------
# Identifiability transform and sign convention
# ---------------------------------------------------------------------------


def _sym_sqrt(S: np.ndarray, name: str) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise RankDeficiencyError(f"{name} Gram matrix is singular (eigenvalues {w})")
    return (V * np.sqrt(w)) @ V.T


def identifiability_transform(F, Z, gap_tol: float = 1e-8):
    """Rotate/scale ``(F, Z)`` so that ``F'F/m == Z'Z/n`` is diagonal.

    Returns ``(F @ G, Z @ inv(G).T, G)``; the product ``F @ Z.T`` is
    unchanged. Diagonal entries come out in strictly decreasing order. F is
    expected to be column-centered already.
    """
    F = np.asarray(F, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    m, n = F.shape[0], Z.shape[0]
    Sz_half = _sym_sqrt(Z.T @ Z / n, "Z")
    Sf = F.T @ F / m
    if np.linalg.eigvalsh(Sf).min() <= 1e-12 * max(np.abs(Sf).max(), 1e-300):
        raise RankDeficiencyError("F Gram matrix is singular")
    M = Sz_half @ Sf @ Sz_half
    rho2, Gamma = np.linalg.eigh((M + M.T) / 2)
    order = np.argsort(-rho2, kind="stable")
    rho2, Gamma = rho2[order], Gamma[:, order]
    # deterministic eigenvector signs: largest-magnitude component positive
    lead = Gamma[np.argmax(np.abs(Gamma), axis=0), np.arange(Gamma.shape[1])]
    Gamma = Gamma * np.where(lead < 0, -1.0, 1.0)
    if rho2.size > 1:
        gaps = -np.diff(rho2) / rho2[0]
        if gaps.min() < gap_tol:
            warnings.warn(
                f"near-tied embedding spectrum (relative gap {gaps.min():.2e}); "
                "column order is not identifiable",
                DegenerateSpectrumWarning,
                stacklevel=2,
            )
    G = Sz_half @ Gamma * rho2 ** -0.25
    F_new = F @ G
    Z_new = np.linalg.solve(G, Z.T).T
    return F_new, Z_new, G


def sign_pattern(Z, reference=None) -> np.ndarray:
    """Column signs ``D`` (+/-1) applied by :func:`sign_align`.

    Without a reference the first nonzero entry of each column of ``Z``
    becomes positive. With a reference, ``D`` minimizes
    ``||Z @ diag(D) - reference||_F``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if reference is not None:
        inner = np.einsum("ik,ik->k", Z, np.asarray(reference, dtype=np.float64))
        return np.where(inner < 0, -1.0, 1.0)
    D = np.ones(Z.shape[1])
    for k in range(Z.shape[1]):
        nz = np.flatnonzero(Z[:, k])
        if nz.size and Z[nz[0], k] < 0:
            D[k] = -1.0
    return D


def sign_align(params, reference=None):
    """Flip embedding columns of ``params`` jointly in ``F`` and ``Z``."""
    D = sign_pattern(params.Z, reference)
    return replace(params, F=params.F * D, Z=params.Z * D)
