"""Plug-in asymptotic covariances, confidence intervals and ellipses.

For a fitted model with natural parameters ``theta_hat`` and weights
``w[j, i] = sigmoid'(theta_hat[j, i])`` the covariance estimates are

* vertex row ``nu_i = (alpha_dagger_i, z_i)``:
  ``A_i = inv(sum_j w[j, i] q_j q_j')`` with ``q_j = (1, f_j)``;
* hyperlink row ``f_j``: ``B_j = inv(sum_i w[j, i] z_i z_i')``;
* their cross-covariance: ``A_i (w[j, i] q_j z_i') B_j``.

These are the unnormalized forms; the normalized asymptotic covariances
differ only by the factors ``exp(-beta) / m`` and ``exp(-beta) / n``, which
cancel when intervals are built. The variance of ``theta_hat[j, i]`` is the
quadratic form of ``(q_j, z_i)`` in the joint covariance and that of
``p_hat[j, i]`` follows by the delta method.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from .estimator import NumericalFailure
from .model import RankDeficiencyError, UncenteredParams, sigmoid, sigmoid_prime

__all__ = [
    "ConfidenceInterval",
    "IntervalSet",
    "ConfidenceEllipse",
    "NumericalFailure",
    "nu_covariances",
    "f_covariances",
    "cov_nu",
    "cov_f",
    "cross_cov",
    "joint_covariance",
    "var_theta",
    "var_p",
    "normal_quantile",
    "confidence_interval",
    "confidence_intervals",
    "confidence_ellipse",
    "intervals_to_csv",
    "ellipses_to_dict",
    "ellipses_svg",
]

TARGETS = ("alpha_dagger", "z", "f", "theta", "p")


def _params(fit) -> UncenteredParams:
    return fit if isinstance(fit, UncenteredParams) else fit.params


def _weights(u: UncenteredParams) -> np.ndarray:
    return sigmoid_prime(u.theta())


def _q(u: UncenteredParams) -> np.ndarray:
    return np.hstack([np.ones((u.m, 1)), u.F])


def _spd_inverse(H: np.ndarray, what: str) -> np.ndarray:
    """Batch inverse of SPD matrices via Cholesky; raises on singular input."""
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(f"{what} information matrix is not positive definite") from None
    eye = np.broadcast_to(np.eye(H.shape[-1]), H.shape)
    Linv = np.linalg.solve(L, eye)
    inv = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))


def _outer_rows(X: np.ndarray) -> np.ndarray:
    return (X[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)


def nu_covariances(fit, vertices=None) -> np.ndarray:
    """``(len(vertices), K+1, K+1)`` stack of ``A_i``."""
    u = _params(fit)
    W = _weights(u)
    if vertices is not None:
        W = W[:, np.atleast_1d(vertices)]
    Q = _q(u)
    k = Q.shape[1]
    H = (W.T @ _outer_rows(Q)).reshape(-1, k, k)
    return _spd_inverse(H, "vertex")


def f_covariances(fit, links=None) -> np.ndarray:
    """``(len(links), K, K)`` stack of ``B_j``."""
    u = _params(fit)
    W = _weights(u)
    if links is not None:
        W = W[np.atleast_1d(links)]
    if u.K == 0:
        return np.zeros((W.shape[0], 0, 0))
    H = (W @ _outer_rows(u.Z)).reshape(-1, u.K, u.K)
    return _spd_inverse(H, "hyperlink")


def cov_nu(fit, i: int) -> np.ndarray:
    return nu_covariances(fit, [i])[0]


def cov_f(fit, j: int) -> np.ndarray:
    return f_covariances(fit, [j])[0]


def cross_cov(fit, j: int, i: int, A=None, B=None) -> np.ndarray:
    """``(K+1) x K`` covariance between ``nu_hat_i`` and ``f_hat_j``."""
    u = _params(fit)
    A = cov_nu(u, i) if A is None else A
    B = cov_f(u, j) if B is None else B
    q = np.concatenate([[1.0], u.F[j]])
    w = sigmoid_prime(u.alpha_dagger[i] + u.F[j] @ u.Z[i])
    return A @ (w * np.outer(q, u.Z[i])) @ B


def joint_covariance(fit, j: int, i: int) -> np.ndarray:
    """``(2K+1)``-square covariance of ``(nu_hat_i, f_hat_j)``."""
    A, B = cov_nu(fit, i), cov_f(fit, j)
    C = cross_cov(fit, j, i, A, B)
    return np.block([[A, C], [C.T, B]])


def _clean_variance(v: np.ndarray) -> np.ndarray:
    if np.any(v < -1e-12):
        raise NumericalFailure(f"negative variance {v.min():.3e}")
    return np.maximum(v, 0.0)


def var_theta(fit, j, i, A=None, B=None):
    """Plug-in variance of ``theta_hat[j, i]`` (vectorized over index arrays).

    With ``a = q' A_i q`` and ``b = z' B_j z`` the joint quadratic form
    reduces to ``a + b + 2 w a b`` because the cross block is the rank-one
    product ``A_i (w q z') B_j``.
    """
    u = _params(fit)
    j = np.atleast_1d(np.asarray(j))
    i = np.atleast_1d(np.asarray(i))
    if A is None:
        uniq_i, inv_i = np.unique(i, return_inverse=True)
        A = nu_covariances(u, uniq_i)[inv_i]
    if B is None:
        uniq_j, inv_j = np.unique(j, return_inverse=True)
        B = f_covariances(u, uniq_j)[inv_j]
    q = np.hstack([np.ones((j.size, 1)), u.F[j]])
    z = u.Z[i]
    w = sigmoid_prime(u.alpha_dagger[i] + np.einsum("rk,rk->r", u.F[j], z))
    a = np.einsum("rk,rkl,rl->r", q, A, q)
    b = np.einsum("rk,rkl,rl->r", z, B, z)
    v = _clean_variance(a + b + 2.0 * w * a * b)
    return v if v.size > 1 else float(v[0])


def var_p(fit, j, i, A=None, B=None):
    """Delta-method variance of ``p_hat[j, i] = sigmoid(theta_hat[j, i])``."""
    u = _params(fit)
    j = np.atleast_1d(np.asarray(j))
    i = np.atleast_1d(np.asarray(i))
    th = u.alpha_dagger[i] + np.einsum("rk,rk->r", u.F[j], u.Z[i])
    v = sigmoid_prime(th) ** 2 * np.atleast_1d(var_theta(u, j, i, A, B))
    return v if v.size > 1 else float(v[0])


def normal_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(norm.ppf(0.5 + level / 2))


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    half_width: float
    level: float
    lower_bound: float = -np.inf
    upper_bound: float = np.inf

    @property
    def lo(self) -> float:
        return max(self.center - self.half_width, self.lower_bound)

    @property
    def hi(self) -> float:
        return min(self.center + self.half_width, self.upper_bound)


@dataclass(frozen=True, eq=False)
class IntervalSet:
    """Intervals for one target family; ``index`` rows are 0-based."""

    target: str
    index: np.ndarray
    estimate: np.ndarray
    variance: np.ndarray
    half_width: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float

    def __len__(self) -> int:
        return self.estimate.size


def _interval_set(target, index, est, var, level, clip=None) -> IntervalSet:
    half = normal_quantile(level) * np.sqrt(var)
    lo, hi = est - half, est + half
    if clip is not None:
        lo, hi = np.clip(lo, *clip), np.clip(hi, *clip)
    return IntervalSet(target, np.asarray(index), est, var, half, lo, hi, level)


def confidence_intervals(fit, level: float = 0.95, targets=("alpha_dagger", "z", "f"), pairs=None) -> dict:
    """Intervals for whole target families.

    ``alpha_dagger``, ``z`` and ``f`` cover every vertex/hyperlink; ``theta``
    and ``p`` cover the ``(j, i)`` pairs in ``pairs = (j_array, i_array)``,
    which are added to ``targets`` automatically when given. ``p`` intervals
    are clipped to ``[0, 1]``; ``half_width`` keeps the unclipped value.
    """
    u = _params(fit)
    targets = list(targets)
    if pairs is not None:
        targets += [t for t in ("theta", "p") if t not in targets]
    unknown = set(targets) - set(TARGETS)
    if unknown:
        raise ValueError(f"unknown targets {sorted(unknown)}")
    A = nu_covariances(u)
    B = f_covariances(u)
    out = {}
    if "alpha_dagger" in targets:
        out["alpha_dagger"] = _interval_set(
            "alpha_dagger", np.arange(u.n)[:, None], u.alpha_dagger, A[:, 0, 0], level
        )
    if "z" in targets:
        ii, kk = np.meshgrid(np.arange(u.n), np.arange(u.K), indexing="ij")
        var = np.diagonal(A, axis1=1, axis2=2)[:, 1:]
        out["z"] = _interval_set("z", np.stack([ii.ravel(), kk.ravel()], 1), u.Z.ravel(), var.ravel(), level)
    if "f" in targets:
        jj, kk = np.meshgrid(np.arange(u.m), np.arange(u.K), indexing="ij")
        var = np.diagonal(B, axis1=1, axis2=2)
        out["f"] = _interval_set("f", np.stack([jj.ravel(), kk.ravel()], 1), u.F.ravel(), var.ravel(), level)
    if "theta" in targets or "p" in targets:
        if pairs is None:
            raise ValueError("theta/p intervals need explicit (j, i) pairs")
        j, i = (np.atleast_1d(np.asarray(x)) for x in pairs)
        th = u.alpha_dagger[i] + np.einsum("rk,rk->r", u.F[j], u.Z[i])
        vt = np.atleast_1d(var_theta(u, j, i, A[i], B[j]))
        idx = np.stack([j, i], 1)
        if "theta" in targets:
            out["theta"] = _interval_set("theta", idx, th, vt, level)
        if "p" in targets:
            out["p"] = _interval_set("p", idx, sigmoid(th), sigmoid_prime(th) ** 2 * vt, level, clip=(0.0, 1.0))
    return out


def confidence_interval(fit, target: str, index, level: float = 0.95) -> ConfidenceInterval:
    """Single interval. ``index`` is ``i`` for ``alpha_dagger``, ``(i, k)`` for
    ``z``, ``(j, k)`` for ``f`` and ``(j, i)`` for ``theta``/``p``."""
    u = _params(fit)
    zq = normal_quantile(level)
    if target == "alpha_dagger":
        return ConfidenceInterval(u.alpha_dagger[index], zq * np.sqrt(cov_nu(u, index)[0, 0]), level)
    if target == "z":
        i, k = index
        return ConfidenceInterval(u.Z[i, k], zq * np.sqrt(cov_nu(u, i)[k + 1, k + 1]), level)
    if target == "f":
        j, k = index
        return ConfidenceInterval(u.F[j, k], zq * np.sqrt(cov_f(u, j)[k, k]), level)
    if target in ("theta", "p"):
        j, i = index
        th = float(u.alpha_dagger[i] + u.F[j] @ u.Z[i])
        if target == "theta":
            return ConfidenceInterval(th, zq * np.sqrt(var_theta(u, j, i)), level)
        return ConfidenceInterval(sigmoid(th), zq * np.sqrt(var_p(u, j, i)), level, 0.0, 1.0)
    raise ValueError(f"unknown target {target!r}")


# ---------------------------------------------------------------------------
# Ellipses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceEllipse:
    """``{x : (x - center)' inv(shape) (x - center) <= radius2}``."""

    center: np.ndarray
    shape: np.ndarray
    radius2: float
    level: float
    vertex: int = 0

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axis lengths (descending) and the matching unit directions (columns)."""
        w, V = np.linalg.eigh(self.shape)
        order = np.argsort(-w)
        return np.sqrt(self.radius2 * w[order]), V[:, order]

    def contains(self, x) -> bool:
        d = np.asarray(x, dtype=np.float64) - self.center
        return bool(d @ np.linalg.solve(self.shape, d) <= self.radius2)

    def boundary(self, points: int = 96) -> np.ndarray:
        lengths, V = self.axes()
        t = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
        circle = np.stack([np.cos(t), np.sin(t)], 1)
        return self.center + (circle * lengths) @ V.T

    def to_dict(self) -> dict:
        return {"center": self.center, "shape": self.shape, "radius2": self.radius2, "level": self.level}


def confidence_ellipse(fit, i: int, level: float = 0.95) -> ConfidenceEllipse:
    """Confidence region for the 2-D embedding of vertex ``i``."""
    u = _params(fit)
    if u.K != 2:
        raise ValueError(f"confidence ellipses need K = 2 embeddings, got K = {u.K}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    A = cov_nu(u, i)
    return ConfidenceEllipse(u.Z[i].copy(), A[1:, 1:].copy(), float(chi2.ppf(level, 2)), level, i)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def intervals_to_csv(sets: dict) -> str:
    """One row per interval: target, index (1-based, ``a:b`` for pairs), estimate, variance, lo, hi, level."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target", "index", "estimate", "variance", "lo", "hi", "level"])
    for name in TARGETS:
        if name not in sets:
            continue
        s = sets[name]
        for r in range(len(s)):
            idx = ":".join(str(int(v) + 1) for v in np.atleast_1d(s.index[r]))
            writer.writerow(
                [name, idx, _fmt(s.estimate[r]), _fmt(s.variance[r]), _fmt(s.lo[r]), _fmt(s.hi[r]), _fmt(s.level)]
            )
    return buf.getvalue()


def ellipses_to_dict(ellipses, labels=None) -> dict:
    return {
        "ellipses": [
            {"vertex": labels[e.vertex] if labels else e.vertex + 1} | e.to_dict() for e in ellipses
        ]
    }


def ellipses_svg(fit, ellipses, labels=None, size: int = 640, version: str = "") -> str:
    """SVG scatter of all vertex embeddings with the given ellipses overlaid."""
    u = _params(fit)
    pts = u.Z[:, :2]
    bounds = [pts] + [e.boundary() for e in ellipses]
    allpts = np.vstack(bounds)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    margin = 40.0
    scale = (size - 2 * margin) / span

    def xy(p):
        # SVG y grows downwards
        return margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<!-- hyperlatent {version} -->",
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    for p in pts:
        x, y = xy(p)
        lines.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.5" fill="#9a9a9a"/>')
    for e in ellipses:
        path = " ".join(
            ("M" if k == 0 else "L") + f"{x:.3f},{y:.3f}" for k, (x, y) in enumerate(map(xy, e.boundary()))
        )
        cx, cy = xy(e.center)
        name = labels[e.vertex] if labels else str(e.vertex + 1)
        lines.append(f'<path d="{path} Z" fill="none" stroke="#c0392b" stroke-width="1.2"/>')
        lines.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="2.5" fill="#c0392b"/>')
        lines.append(
            f'<text x="{cx + 4:.3f}" y="{cy - 4:.3f}" font-size="11" font-family="sans-serif">{_escape(name)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
