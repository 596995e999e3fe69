"""Constrained maximum likelihood fitting by projected gradient ascent.

Two estimators are provided:

* :func:`fit` maximizes the log-likelihood minus the identifiability penalty
  over the box ``F2`` (un-centered parameterization) and finishes with the
  exact identifiability transform, so individual embeddings are identified
  up to the sign convention.
* :func:`fit_f1` maximizes the plain log-likelihood over the box ``F1``
  (centered parameterization). Only ``theta``, ``alpha`` and ``beta`` are
  meaningful in its output.

Both use the same ascent loop. Search directions are the gradient
preconditioned row by row with the inverse Fisher information of each
vertex row ``(alpha_dagger_i, z_i)`` and each hyperlink row ``f_j``; step
lengths come from Armijo backtracking along the projection arc, so every
accepted step increases the objective.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, svds

from .model import (
    ModelParams,
    RankDeficiencyError,
    UncenteredParams,
    constraint_residuals,
    identifiability_transform,
    log1pexp,
    logit,
    penalty,
    penalty_gradient,
    sigmoid,
    sign_align,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "EstimationError",
    "NumericalFailure",
    "c_hat",
    "tune_c_beta",
    "usvt_init",
    "usvt_probability",
    "random_init",
    "project_F2",
    "project_F1",
    "f2_violation",
    "f1_violation",
    "fit",
    "fit_f1",
]

log = logging.getLogger(__name__)


class EstimationError(ValueError):
    """The data cannot support the requested fit."""


class NumericalFailure(ArithmeticError):
    """The objective became non-finite."""


@dataclass(frozen=True)
class FitConfig:
    """Tuning constants and optimizer controls.

    ``C3`` is the upper bound on ``mean(alpha_dagger)``. When ``None`` the
    scaled rule ``C3 = -C3_prime * c_beta`` is used instead; that rule
    assumes a sparse regime and excludes moderate or dense truths, so the
    default is a fixed bound equal to ``C2``.
    """

    K: int = 2
    c_prime: float = 1.5
    C1: float = 2.0
    C2: float = 1.0
    C3_prime: float = 0.9
    C3: float | None = 1.0
    C4: float = 2.0
    C5: float = 2.0
    lam: float = 1.0
    step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-8
    max_iters: int = 2000
    usvt_multiplier: float = 2.01
    init: str = "usvt"
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        for name in ("c_prime", "C1", "C2", "C4", "C5", "lam", "step", "tol", "usvt_multiplier"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c_prime < 1:
            raise ValueError("c_prime must be >= 1")
        if not 0 < self.C3_prime < 1:
            raise ValueError("C3_prime must lie in (0, 1)")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise ValueError("shrink and armijo must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.init not in ("usvt", "random"):
            raise ValueError("init must be 'usvt' or 'random'")

    def upper_mean_bound(self, c_beta: float) -> float:
        return -self.C3_prime * c_beta if self.C3 is None else self.C3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown fit options: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Output of :func:`fit` or :func:`fit_f1`.

    ``objective_trace`` holds the objective at the initial point and after
    every accepted step. ``raw_constraint_residuals`` are measured on the
    last iterate before the identifiability transform; ``constraint_residuals``
    after it.
    """

    params: UncenteredParams
    params_centered: ModelParams
    c_beta: float
    c_hat: float
    objective_trace: np.ndarray
    loglik: float
    penalty: float
    constraint_residuals: dict
    raw_constraint_residuals: dict
    max_feasibility_violation: float
    iterations: int
    converged: bool
    identified: bool
    method: str
    config: FitConfig = field(default_factory=FitConfig)

    def theta(self) -> np.ndarray:
        return self.params.theta()

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params.to_dict(),
            "params_centered": self.params_centered.to_dict(),
            "c_beta": self.c_beta,
            "c_hat": self.c_hat,
            "loglik": self.loglik,
            "penalty": self.penalty,
            "iterations": self.iterations,
            "converged": self.converged,
            "identified": self.identified,
            "max_feasibility_violation": self.max_feasibility_violation,
            "constraint_residuals": self.constraint_residuals,
            "raw_constraint_residuals": self.raw_constraint_residuals,
            "objective_trace": self.objective_trace,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            params=UncenteredParams.from_dict(d["params"]),
            params_centered=ModelParams.from_dict(d["params_centered"]),
            c_beta=float(d["c_beta"]),
            c_hat=float(d["c_hat"]),
            objective_trace=np.asarray(d["objective_trace"], dtype=np.float64),
            loglik=float(d["loglik"]),
            penalty=float(d["penalty"]),
            constraint_residuals=dict(d["constraint_residuals"]),
            raw_constraint_residuals=dict(d["raw_constraint_residuals"]),
            max_feasibility_violation=float(d["max_feasibility_violation"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            identified=bool(d["identified"]),
            method=d["method"],
            config=FitConfig.from_dict(d["config"]),
        )


def _dense(Y) -> np.ndarray:
    Y = Y.toarray() if sparse.issparse(Y) else np.asarray(Y)
    Y = Y.astype(np.float64)
    if Y.ndim != 2 or Y.size == 0:
        raise EstimationError("incidence matrix must be a nonempty 2-D array")
    return Y


# ---------------------------------------------------------------------------
# Tuning and initialization
# ---------------------------------------------------------------------------


def c_hat(Y) -> float:
    """Minus log of the incidence density, a plug-in estimate of ``-beta``."""
    Y = _dense(Y)
    density = float(Y.sum()) / Y.size
    if density == 0:
        raise EstimationError(
            "incidence matrix has no memberships: every hyperlink is empty, "
            "so the order-adjusting parameter is not estimable"
        )
    return -float(np.log(density))


def tune_c_beta(Y, c_prime: float = 1.5) -> float:
    """Lower-bound magnitude ``C_beta = c_prime * c_hat(Y)`` for the intercept."""
    if c_prime < 1:
        raise ValueError("c_prime must be >= 1")
    return c_prime * c_hat(Y)


def _clip_level(c_beta: float) -> float:
    """Probability clip ``exp(-2 c_beta)``, kept inside ``[1e-6, 1/4]``."""
    return min(0.25, max(1e-6, float(np.exp(-2.0 * c_beta))))


def _fallback_init(Y: np.ndarray, K: int, delta: float) -> UncenteredParams:
    p = np.clip(Y.mean(axis=0), delta, 1 - delta)
    m, n = Y.shape
    return UncenteredParams(logit(p), np.zeros((m, K)), np.zeros((n, K)))


def _top_svd(A, k: int, seed: int):
    """Leading ``k`` singular triplets, sorted by decreasing value."""
    v0 = np.random.default_rng(seed).standard_normal(min(A.shape))
    U, s, Vt = svds(A, k=k, v0=v0, solver="arpack")
    order = np.argsort(-s)
    return U[:, order], s[order], Vt[order]


def usvt_probability(Y, K: int, multiplier: float = 2.01, seed: int = 0) -> np.ndarray:
    """Singular value thresholding estimate of the probability matrix.

    Keeps at most ``K + 1`` singular values above
    ``multiplier * sqrt(max(m, n) * density)``. The result is not clipped.
    """
    Y = _dense(Y)
    m, n = Y.shape
    k = min(K + 1, min(m, n) - 1)
    if k < 1:
        raise ValueError("matrix too small for a truncated SVD")
    U, s, Vt = _top_svd(Y, k, seed)
    keep = s > multiplier * np.sqrt(max(m, n)) * np.sqrt(Y.mean())
    return (U[:, keep] * s[keep]) @ Vt[keep]


def usvt_init(Y, K: int, c_beta: float, multiplier: float = 2.01, seed: int = 0) -> UncenteredParams:
    """Spectral starting point from singular value thresholding of ``Y``.

    The thresholded low-rank estimate of the probability matrix is clipped
    away from 0 and 1, mapped to the logit scale, split into column means
    (``alpha_dagger``) and a residual whose rank-``K`` SVD gives balanced
    ``F`` and ``Z``. Falls back to zero embeddings with logit column means
    when the SVD is impossible or fails. Small random embeddings replace
    zero ones when nothing beyond the column means survives the threshold.
    The result is not yet projected.
    """
    Y = _dense(Y)
    m, n = Y.shape
    delta = _clip_level(c_beta)
    if Y.mean() == 0 or K + 1 >= min(m, n):
        return _fallback_init(Y, K, delta)
    try:
        P = usvt_probability(Y, K, multiplier, seed)
        if not P.any():
            # zero embeddings are a saddle the ascent cannot leave
            return random_init(Y, K, c_beta, seed)
        Theta0 = logit(np.clip(P, delta, 1 - delta))
        a0 = Theta0.mean(axis=0)
        R = Theta0 - a0[None, :]
        if np.abs(R).max() < 1e-8:
            return replace(random_init(Y, K, c_beta, seed), alpha_dagger=a0)
        U, s, Vt = _top_svd(R, K, seed + 1)
    except (ArpackError, ArpackNoConvergence, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("USVT initialization failed (%s); using fallback", exc)
        return _fallback_init(Y, K, delta)
    root = np.sqrt(s)
    F0 = U * root * (n / m) ** 0.25
    Z0 = Vt.T * root * (m / n) ** 0.25
    return UncenteredParams(a0, F0, Z0)


def random_init(Y, K: int, c_beta: float, seed: int = 0, scale: float = 0.1) -> UncenteredParams:
    """Small Gaussian embeddings with logit column means for ``alpha_dagger``."""
    Y = _dense(Y)
    m, n = Y.shape
    delta = _clip_level(c_beta)
    rng = np.random.default_rng(seed)
    base = _fallback_init(Y, K, delta)
    return replace(base, F=scale * rng.standard_normal((m, K)), Z=scale * rng.standard_normal((n, K)))


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------


def _zero_mean_clip(dev: np.ndarray, bound: float) -> np.ndarray:
    """Clip ``dev`` into ``[-bound, bound]`` after a shift that keeps the mean at 0.

    Returns ``dev`` unchanged when it is already within the bound. The
    shift solves the piecewise-linear equation ``mean(clip(dev - t)) = 0``.
    """
    if np.abs(dev).max(initial=0.0) <= bound:
        return dev
    lo, hi = dev.min() - bound, dev.max() + bound
    for _ in range(200):
        t = 0.5 * (lo + hi)
        if np.clip(dev - t, -bound, bound).sum() > 0:
            lo = t
        else:
            hi = t
        if hi - lo < 1e-15 * max(1.0, abs(t)):
            break
    t = 0.5 * (lo + hi)
    shifted = dev - t
    upper, lower = shifted >= bound, shifted <= -bound
    free = ~(upper | lower)
    if free.any():
        t = (dev[free].sum() + bound * (upper.sum() - lower.sum())) / free.sum()
    out = np.clip(dev - t, -bound, bound)
    if free.any():
        out[free] -= out.sum() / free.sum()
    return out


def _clip_rows(A: np.ndarray, radius: float) -> tuple[np.ndarray, bool]:
    norms = np.linalg.norm(A, axis=1)
    over = norms > radius
    if not over.any():
        return A, False
    A = A.copy()
    A[over] *= (radius / norms[over])[:, None]
    return A, True


def _center_rows_bounded(F: np.ndarray, Z: np.ndarray, a: np.ndarray, radius: float):
    """Center ``F`` (moving the mean into ``a`` so ``theta`` is kept) and clip rows.

    Alternates centering and row clipping until both hold to 1e-12.
    """
    for _ in range(100):
        mu = F.mean(axis=0)
        if np.abs(mu).max(initial=0.0) > 0:
            a = a + Z @ mu
            F = F - mu
        F, clipped_f = _clip_rows(F, radius)
        if not clipped_f or np.abs(F.mean(axis=0)).max(initial=0.0) < 1e-12:
            break
    Z, _ = _clip_rows(Z, radius)
    return F, Z, a


def project_F2(
    params: UncenteredParams,
    c_beta: float,
    C3_prime: float = 0.9,
    C4: float = 2.0,
    C5: float = 2.0,
    C3: float | None = None,
) -> UncenteredParams:
    """Map un-centered parameters into the ``F2`` box.

    Steps: center ``F`` (absorbing the mean into ``alpha_dagger`` so the
    natural parameters are unchanged), clip ``mean(alpha_dagger)`` into
    ``[-c_beta, C3]`` with ``C3 = -C3_prime * c_beta`` unless given, clip the
    deviations from the mean into ``[-C4, C4]`` without moving the mean, and
    pull rows of ``F`` and ``Z`` back onto the ``C5`` ball.
    """
    upper = -C3_prime * c_beta if C3 is None else C3
    lower = -c_beta
    if upper < lower:
        raise ValueError(f"empty mean interval [{lower}, {upper}]")
    F, Z, a = _center_rows_bounded(params.F, params.Z, params.alpha_dagger, C5)
    mean = float(a.mean())
    dev = _zero_mean_clip(a - mean, C4)
    a = np.clip(mean, lower, upper) + dev
    return UncenteredParams(a, F, Z)


def project_F1(params: ModelParams, c_beta: float, C1: float = 2.0, C2: float = 1.0) -> ModelParams:
    """Map centered parameters into the ``F1`` box.

    Centers ``F`` and ``alpha`` (shifting into ``alpha``/``beta`` so that
    ``theta`` is kept), clips ``beta`` into ``[-c_beta, C2]``, clips
    ``alpha`` into ``[-C1, C1]`` keeping ``sum(alpha) = 0``, and pulls
    embedding rows onto the ``C1`` ball.
    """
    if C2 < -c_beta:
        raise ValueError("empty interval for beta")
    a = params.beta + params.alpha
    F, Z, a = _center_rows_bounded(params.F, params.Z, a, C1)
    beta = float(a.mean())
    alpha = _zero_mean_clip(a - beta, C1)
    alpha = alpha - alpha.mean()
    return ModelParams(float(np.clip(beta, -c_beta, C2)), alpha, F, Z)


def f2_violation(params: UncenteredParams, c_beta: float, upper: float, C4: float, C5: float) -> float:
    """Largest amount by which ``params`` breaks an ``F2`` inequality (0 if feasible)."""
    a = params.alpha_dagger
    mean = a.mean()
    return float(
        max(
            0.0,
            -c_beta - mean,
            mean - upper,
            np.abs(a - mean).max() - C4,
            np.linalg.norm(params.F, axis=1).max() - C5,
            np.linalg.norm(params.Z, axis=1).max() - C5,
        )
    )


def f1_violation(params: ModelParams, c_beta: float, C1: float, C2: float) -> float:
    """Largest ``F1`` violation, including the two centering equalities."""
    return float(
        max(
            0.0,
            -c_beta - params.beta,
            params.beta - C2,
            np.abs(params.alpha).max() - C1,
            np.linalg.norm(params.F, axis=1).max() - C1,
            np.linalg.norm(params.Z, axis=1).max() - C1,
            abs(params.alpha.sum()),
            np.abs(params.F.sum(axis=0)).max(),
        )
    )


# ---------------------------------------------------------------------------
# Ascent loop
# ---------------------------------------------------------------------------


def _regularize(H: np.ndarray) -> np.ndarray:
    k = H.shape[-1]
    ridge = 1e-8 * np.maximum(np.trace(H, axis1=1, axis2=2) / k, 1e-12)
    return H + ridge[:, None, None] * np.eye(k)


def _ball_newton(H: np.ndarray, g: np.ndarray, x: np.ndarray, radius: float, start: int) -> np.ndarray:
    """Row-wise Newton steps that respect ``||x[r, start:]|| <= radius``.

    Each row maximizes its quadratic model ``g'd - d'Hd/2`` over the ball.
    Rows whose unconstrained step leaves the ball solve the secular
    equation ``||y(mu)[start:]|| = radius`` with
    ``y(mu) = (H + mu E)^{-1} (H x + g)`` and ``E`` selecting the ball
    coordinates; ``mu`` is found by bisection on a log scale.
    """
    H = _regularize(H)
    rhs = np.einsum("rkl,rl->rk", H, x) + g
    y = np.linalg.solve(H, rhs[..., None])[..., 0]
    out = np.linalg.norm(y[:, start:], axis=1) > radius
    if out.any():
        Ho, bo = H[out], rhs[out]
        E = np.zeros(H.shape[-1])
        E[start:] = 1.0
        scale = np.trace(Ho, axis1=1, axis2=2)
        lo = np.zeros(len(Ho))
        hi = np.maximum(scale, 1e-12)
        solve = lambda mu: np.linalg.solve(Ho + mu[:, None, None] * np.diag(E), bo[..., None])[..., 0]
        for _ in range(60):
            grow = np.linalg.norm(solve(hi)[:, start:], axis=1) > radius
            if not grow.any():
                break
            hi[grow] *= 4.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            big = np.linalg.norm(solve(mid)[:, start:], axis=1) > radius
            lo = np.where(big, mid, lo)
            hi = np.where(big, hi, mid)
        yo = solve(hi)
        # guard against round-off just outside the ball
        norms = np.linalg.norm(yo[:, start:], axis=1)
        shrink = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
        yo[:, start:] *= shrink[:, None]
        y[out] = yo
    return y - x


def _precondition(W: np.ndarray, a_grad, Z_grad, F_grad, a, F, Z, radius: float):
    """Row-wise Fisher-scaled steps, restricted to the embedding balls."""
    m, K = F.shape
    Q = np.hstack([np.ones((m, 1)), F])
    QQ = (Q[:, :, None] * Q[:, None, :]).reshape(m, -1)
    H_nu = (W.T @ QQ).reshape(-1, K + 1, K + 1)
    ZZ = (Z[:, :, None] * Z[:, None, :]).reshape(Z.shape[0], -1)
    H_f = (W @ ZZ).reshape(-1, K, K)
    nu = np.hstack([a[:, None], Z])
    d_nu = _ball_newton(H_nu, np.hstack([a_grad[:, None], Z_grad]), nu, radius, 1)
    d_f = _ball_newton(H_f, F_grad, F, radius, 0)
    return d_nu[:, 0], d_nu[:, 1:], d_f


class _Problem:
    """Objective, gradient and projection for one of the two estimators."""

    def __init__(self, Y, config: FitConfig, c_beta: float, penalized: bool):
        self.Y = Y
        self.cfg = config
        self.c_beta = c_beta
        self.penalized = penalized
        self.upper = config.upper_mean_bound(c_beta)

    def evaluate(self, x: UncenteredParams):
        th = x.theta()
        loglik = float(np.sum(self.Y * th) - np.sum(log1pexp(th)))
        pen = penalty(x.Z, x.F, self.cfg.lam) if self.penalized else 0.0
        return loglik - pen, loglik, pen, th

    def project(self, x: UncenteredParams) -> UncenteredParams:
        c = self.cfg
        if self.penalized:
            return project_F2(x, self.c_beta, c.C3_prime, c.C4, c.C5, C3=self.upper)
        return project_F1(x.centered(), self.c_beta, c.C1, c.C2).uncentered()

    def violation(self, x: UncenteredParams) -> float:
        c = self.cfg
        if self.penalized:
            return f2_violation(x, self.c_beta, self.upper, c.C4, c.C5)
        return f1_violation(x.centered(), self.c_beta, c.C1, c.C2)

    def regauge(self, x: UncenteredParams, obj: float):
        """Move to the penalty-free representative of ``theta`` when that stays feasible.

        Centering ``F`` and the identifiability transform leave ``theta``
        and the likelihood unchanged and zero the penalty, so the move can
        only raise the objective. A representative outside ``F2`` is
        projected back and kept only if the objective still does not drop.
        """
        if not self.penalized:
            return None
        mu = x.F.mean(axis=0)
        try:
            F, Z, _ = identifiability_transform(x.F - mu, x.Z, gap_tol=0.0)
        except RankDeficiencyError:
            return None
        cand = UncenteredParams(x.alpha_dagger + x.Z @ mu, F, Z)
        if self.violation(cand) > 0:
            cand = self.project(cand)
        c_obj, c_ll, c_pen, c_th = self.evaluate(cand)
        if not c_obj >= obj:
            return None
        return cand, c_obj, c_ll, c_pen, c_th

    def direction(self, x: UncenteredParams, th: np.ndarray):
        P = sigmoid(th)
        R = self.Y - P
        g_a = R.sum(axis=0)
        g_Z = R.T @ x.F
        g_F = R @ x.Z
        if self.penalized:
            pg_Z, pg_F = penalty_gradient(x.Z, x.F, self.cfg.lam)
            g_Z = g_Z - pg_Z
            g_F = g_F - pg_F
        grad = UncenteredParams(g_a, g_F, g_Z)
        W = P * (1.0 - P)
        radius = self.cfg.C5 if self.penalized else self.cfg.C1
        d_a, d_Z, d_F = _precondition(W, g_a, g_Z, g_F, x.alpha_dagger, x.F, x.Z, radius)
        return grad, UncenteredParams(d_a, d_F, d_Z)


def _inner(g: UncenteredParams, x: UncenteredParams, y: UncenteredParams) -> float:
    return float(
        g.alpha_dagger @ (y.alpha_dagger - x.alpha_dagger)
        + np.sum(g.F * (y.F - x.F))
        + np.sum(g.Z * (y.Z - x.Z))
    )


def _step(x: UncenteredParams, d: UncenteredParams, s: float) -> UncenteredParams:
    return UncenteredParams(x.alpha_dagger + s * d.alpha_dagger, x.F + s * d.F, x.Z + s * d.Z)


def _ascend(problem: _Problem, x: UncenteredParams):
    cfg = problem.cfg
    x = problem.project(x)
    obj, loglik, pen, th = problem.evaluate(x)
    if not np.isfinite(obj):
        raise NumericalFailure("non-finite objective at the initial point")
    trace = [obj]
    worst = problem.violation(x)
    converged = False
    s_prev = cfg.step
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad, pre = problem.direction(x, th)
        accepted = None
        for direction in (pre, grad):
            s = min(cfg.step, 2.0 * s_prev)
            while s > 1e-12:
                cand = problem.project(_step(x, direction, s))
                gain = _inner(grad, x, cand)
                c_obj, c_ll, c_pen, c_th = problem.evaluate(cand)
                if not np.isfinite(c_obj):
                    raise NumericalFailure(f"non-finite objective at iteration {it}")
                if gain >= 0 and c_obj >= obj + cfg.armijo * gain:
                    accepted = (cand, c_obj, c_ll, c_pen, c_th, s)
                    break
                s *= cfg.shrink
            if accepted is not None:
                break
        if accepted is None:
            converged = True
            break
        x, new_obj, loglik, pen, th, s_prev = accepted
        worst = max(worst, problem.violation(x))
        regauged = problem.regauge(x, new_obj)
        if regauged is not None:
            trace.append(new_obj)
            x, new_obj, loglik, pen, th = regauged
        change = abs(new_obj - obj) / max(1.0, abs(obj))
        obj = new_obj
        trace.append(obj)
        if change < cfg.tol:
            converged = True
            break
    return x, np.asarray(trace), loglik, pen, worst, it, converged


def _prepare(Y, config: FitConfig):
    Yd = _dense(Y)
    ch = c_hat(Yd)
    cb = config.c_prime * ch
    if config.init == "usvt":
        x0 = usvt_init(Yd, config.K, cb, config.usvt_multiplier, config.seed)
    else:
        x0 = random_init(Yd, config.K, cb, config.seed)
    return Yd, ch, cb, x0


def fit(Y, config: FitConfig | None = None) -> FitResult:
    """Penalized constrained MLE with exact identifiability finalization."""
    config = config or FitConfig()
    Yd, ch, cb, x0 = _prepare(Y, config)
    problem = _Problem(Yd, config, cb, penalized=True)
    x, trace, loglik, pen, worst, iters, converged = _ascend(problem, x0)
    raw = constraint_residuals(x.F, x.Z)

    # exact finalization: centering and the transform both keep theta fixed
    mu = x.F.mean(axis=0)
    a, F, Z = x.alpha_dagger + x.Z @ mu, x.F - mu, x.Z
    identified = True
    try:
        F, Z, _ = identifiability_transform(F, Z)
    except RankDeficiencyError as exc:
        warnings.warn(f"identifiability transform skipped: {exc}", RuntimeWarning, stacklevel=2)
        identified = False
    final = sign_align(UncenteredParams(a, F, Z))
    final_ll = float(np.sum(Yd * final.theta()) - np.sum(log1pexp(final.theta())))
    return FitResult(
        params=final,
        params_centered=final.centered(),
        c_beta=cb,
        c_hat=ch,
        objective_trace=trace,
        loglik=final_ll,
        penalty=penalty(final.Z, final.F, config.lam),
        constraint_residuals=constraint_residuals(final.F, final.Z),
        raw_constraint_residuals=raw,
        max_feasibility_violation=worst,
        iterations=iters,
        converged=converged,
        identified=identified,
        method="penalized",
        config=config,
    )


def fit_f1(Y, config: FitConfig | None = None) -> FitResult:
    """Constrained MLE over ``F1`` (no identifiability transform)."""
    config = config or FitConfig()
    Yd, ch, cb, x0 = _prepare(Y, config)
    problem = _Problem(Yd, config, cb, penalized=False)
    x, trace, loglik, _, worst, iters, converged = _ascend(problem, x0)
    centered = x.centered()
    res = constraint_residuals(x.F, x.Z)
    return FitResult(
        params=centered.uncentered(),
        params_centered=centered,
        c_beta=cb,
        c_hat=ch,
        objective_trace=trace,
        loglik=loglik,
        penalty=0.0,
        constraint_residuals=res,
        raw_constraint_residuals=res,
        max_feasibility_violation=worst,
        iterations=iters,
        converged=converged,
        identified=False,
        method="f1",
        config=config,
    )
