"""Synthetic hypergraphs and Monte-Carlo experiment drivers.

Ground truth follows the simulation design used to study the estimator:
vertices are split into ``K`` near-equal groups, vertex embeddings of group
``k`` are drawn from a normal centered at the ``k``-th basis vector and
truncated to within 1 of that center on every coordinate, hyperlink
embeddings are truncated centered normals (then exactly centered), and
degree parameters are uniform on ``[-1, 1]`` (then exactly centered).
Both covariance matrices are ``0.2 * rho ** |k - l|``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable

import numpy as np
from scipy import sparse

from .estimator import FitConfig, fit, fit_f1
from .hypergraph import Hypergraph, audit, from_incidence
from .inference import confidence_intervals
from .model import ModelParams, identifiability_transform, sigmoid, sign_align

__all__ = [
    "SimDesign",
    "GroundTruth",
    "ar_covariance",
    "truncated_normal",
    "gen_ground_truth",
    "sample_incidence",
    "gen_hypergraph",
    "child_seeds",
    "experiment_error_scaling",
    "experiment_coverage",
    "experiment_sparsity",
    "sparsity_oracle",
    "summarize",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimDesign:
    n: int = 200
    m: int = 1000
    K: int = 2
    rho: float = 0.0
    beta_star: float = -1.0
    seed: int = 0
    mc_reps: int = 20

    def __post_init__(self):
        if min(self.n, self.m, self.K, self.mc_reps) < 1:
            raise ValueError("n, m, K and mc_reps must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimDesign":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown design options: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    params: ModelParams
    groups: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta()

    @property
    def P(self) -> np.ndarray:
        return sigmoid(self.theta)

    @property
    def alpha_dagger(self) -> np.ndarray:
        return self.params.beta + self.params.alpha

    def identified(self):
        """Truth in the identified gauge (``F'F/m == Z'Z/n`` diagonal, sign convention)."""
        u = self.params.uncentered()
        F, Z, _ = identifiability_transform(u.F, u.Z)
        return sign_align(replace(u, F=F, Z=Z))


def ar_covariance(K: int, rho: float, scale: float = 0.2) -> np.ndarray:
    idx = np.arange(K)
    return scale * rho ** np.abs(idx[:, None] - idx[None, :])


def truncated_normal(rng: np.random.Generator, size: int, cov: np.ndarray, bound: float = 1.0) -> np.ndarray:
    """Centered normal draws with every coordinate restricted to ``[-bound, bound]``.

    Exact joint rejection: a draw is kept only when all coordinates fall
    inside the band.
    """
    K = cov.shape[0]
    L = np.linalg.cholesky(cov)
    out = np.empty((0, K))
    while out.shape[0] < size:
        need = size - out.shape[0]
        batch = rng.standard_normal((int(need * 1.5) + 16, K)) @ L.T
        batch = batch[np.all(np.abs(batch) <= bound, axis=1)]
        out = np.vstack([out, batch[:need]])
    return out


def gen_ground_truth(design: SimDesign, seed: int | None = None) -> GroundTruth:
    rng = np.random.default_rng(design.seed if seed is None else seed)
    n, m, K = design.n, design.m, design.K
    sizes = np.full(K, n // K)
    sizes[: n % K] += 1
    groups = np.empty(n, dtype=np.int64)
    groups[rng.permutation(n)] = np.repeat(np.arange(K), sizes)
    cov = ar_covariance(K, design.rho)
    Z = np.eye(K)[groups] + truncated_normal(rng, n, cov)
    F = truncated_normal(rng, m, cov)
    F -= F.mean(axis=0)
    alpha = rng.uniform(-1.0, 1.0, n)
    alpha -= alpha.mean()
    return GroundTruth(ModelParams(design.beta_star, alpha, F, Z), groups)


def sample_incidence(gt: GroundTruth, seed) -> np.ndarray:
    """Dense 0/1 incidence with independent ``Bernoulli(sigmoid(theta))`` entries."""
    rng = np.random.default_rng(seed)
    return (rng.random(gt.theta.shape) < gt.P).astype(np.float64)


def gen_hypergraph(gt: GroundTruth, seed) -> Hypergraph:
    return from_incidence(sparse.csr_array(sample_incidence(gt, seed)))


def child_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent per-replicate seed sequences."""
    return np.random.SeedSequence(seed).spawn(count)


def _run_reps(func: Callable, seeds, threads: int) -> list:
    if threads <= 1:
        return [func(r, s) for r, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(len(seeds)), seeds))


def summarize(rows: list[dict], keys: list[str], metric_names: list[str]) -> list[dict]:
    """Median and quartiles of each metric per cell; failed reps are skipped."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for cell, reps in cells.items():
        for metric in metric_names:
            vals = np.array([r[metric] for r in reps if r.get("ok", True)], dtype=np.float64)
            vals = vals[np.isfinite(vals)]
            q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75]) if vals.size else (np.nan,) * 3
            out.append(
                dict(zip(keys, cell))
                | {
                    "metric": metric,
                    "median": float(med),
                    "q25": float(q25),
                    "q75": float(q75),
                    "reps": int(vals.size),
                    "failed": len(reps) - int(vals.size),
                }
            )
    return out


# ---------------------------------------------------------------------------
# Error scaling
# ---------------------------------------------------------------------------


def experiment_error_scaling(
    n_grid,
    K_grid=(2,),
    beta_grid=(-3.0,),
    m_ratio: float = 10.0,
    rho: float = 0.0,
    mc_reps: int = 20,
    seed: int = 0,
    config: FitConfig | None = None,
    threads: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Estimation error of the ``F1`` estimator over a grid of designs.

    Returns ``(raw_rows, summary_rows)``. Metrics per replicate are the
    normalized Frobenius error of ``theta``, ``||alpha_hat - alpha||/sqrt(n)``
    and ``|beta_hat - beta|``.
    """
    config = config or FitConfig()
    if not len(n_grid):
        raise ValueError("n_grid is empty")
    cells = [(n, K, b) for n in n_grid for K in K_grid for b in beta_grid]
    seeds = child_seeds(seed, len(cells) * mc_reps)

    def one(idx, ss):
        n, K, b = cells[idx // mc_reps]
        m = int(round(m_ratio * n))
        row = {"n": n, "m": m, "K": K, "beta_star": b, "rep": idx % mc_reps}
        gt_seed, y_seed = ss.spawn(2)
        try:
            gt = gen_ground_truth(SimDesign(n=n, m=m, K=K, rho=rho, beta_star=b), seed=gt_seed)
            Y = sample_incidence(gt, y_seed)
            res = fit_f1(Y, replace(config, K=K))
        except Exception as exc:  # a failed cell must not stop the sweep
            log.warning("cell n=%s K=%s beta=%s failed: %s", n, K, b, exc)
            return row | {"ok": False, "theta_error": np.nan, "alpha_error": np.nan, "beta_error": np.nan}
        est = res.params_centered
        return row | {
            "ok": True,
            "theta_error": float(np.linalg.norm(est.theta() - gt.theta) / np.sqrt(m * n)),
            "alpha_error": float(np.linalg.norm(est.alpha - gt.params.alpha) / np.sqrt(n)),
            "beta_error": abs(est.beta - b),
            "iterations": res.iterations,
        }

    rows = _run_reps(one, seeds, threads)
    return rows, summarize(rows, ["n", "m", "K", "beta_star"], ["theta_error", "alpha_error", "beta_error"])


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

FAMILIES = ("alpha_dagger", "z", "f", "theta", "p")


def coverage_replicate(gt: GroundTruth, Y: np.ndarray, config: FitConfig, level: float = 0.95) -> dict:
    """Fit, build intervals for every family and score them against the truth.

    The truth is mapped to the identified gauge and the estimate is
    sign-aligned to it before embeddings are compared. ``theta`` and ``p``
    intervals cover the diagonal pairs ``(i, i)``.
    """
    res = fit(Y, config)
    truth = gt.identified()
    est = sign_align(res.params, truth.Z)
    res = replace(res, params=est, params_centered=est.centered())
    diag = np.arange(min(gt.params.m, gt.params.n))
    ci = confidence_intervals(res, level=level, pairs=(diag, diag))
    th_true = truth.theta()
    targets = {
        "alpha_dagger": truth.alpha_dagger,
        "z": truth.Z.ravel(),
        "f": truth.F.ravel(),
        "theta": th_true[diag, diag],
        "p": sigmoid(th_true[diag, diag]),
    }
    out = {"iterations": res.iterations, "converged": res.converged}
    for fam in FAMILIES:
        lo, hi = ci[fam].lo, ci[fam].hi
        out[f"{fam}_coverage"] = float(np.mean((lo <= targets[fam]) & (targets[fam] <= hi)))
        out[f"{fam}_length"] = float(np.mean(hi - lo))
    return out


def experiment_coverage(
    n_grid,
    beta_grid=(0.0, -1.0),
    level: float = 0.95,
    rho: float = 0.0,
    mc_reps: int = 20,
    seed: int = 0,
    config: FitConfig | None = None,
    threads: int = 1,
    fixed_truth: bool = True,
) -> tuple[list[dict], list[dict]]:
    """Empirical coverage and mean interval length per family with ``m = n``, ``K = 2``.

    With ``fixed_truth`` the ground truth is drawn once per cell and only
    the hypergraph is redrawn per replicate, so each coverage value is a
    frequency over repeated samples of the same parameters.
    """
    config = replace(config or FitConfig(), K=2)
    cells = [(n, b) for n in n_grid for b in beta_grid]
    truths = {}
    for c_idx, (n, b) in enumerate(cells):
        if fixed_truth:
            ss = np.random.SeedSequence([seed, c_idx, 1])
            truths[c_idx] = gen_ground_truth(SimDesign(n=n, m=n, K=2, rho=rho, beta_star=b), seed=ss)
    seeds = child_seeds(seed, len(cells) * mc_reps)

    def one(idx, ss):
        c_idx = idx // mc_reps
        n, b = cells[c_idx]
        row = {"n": n, "m": n, "beta_star": b, "rep": idx % mc_reps}
        gt_seed, y_seed = ss.spawn(2)
        try:
            gt = truths.get(c_idx) or gen_ground_truth(
                SimDesign(n=n, m=n, K=2, rho=rho, beta_star=b), seed=gt_seed
            )
            Y = sample_incidence(gt, y_seed)
            return row | {"ok": True} | coverage_replicate(gt, Y, config, level)
        except Exception as exc:
            log.warning("coverage cell n=%s beta=%s failed: %s", n, b, exc)
            return row | {"ok": False} | {f"{f}_{k}": np.nan for f in FAMILIES for k in ("coverage", "length")}

    rows = _run_reps(one, seeds, threads)
    metrics = [f"{f}_{k}" for f in FAMILIES for k in ("coverage", "length")]
    summary = summarize(rows, ["n", "m", "beta_star"], metrics)
    for s in summary:
        vals = [r[s["metric"]] for r in rows if (r["n"], r["beta_star"]) == (s["n"], s["beta_star"]) and r["ok"]]
        s["mean"] = float(np.mean(vals)) if vals else float("nan")
    return rows, summary


# ---------------------------------------------------------------------------
# Sparsity phase transitions
# ---------------------------------------------------------------------------


def sparsity_oracle(p: float, n: int, m: int) -> dict:
    """Closed-form chances of at least one empty hyperlink / null vertex for constant ``p``."""
    return {
        "empty_link": 1.0 - (1.0 - (1.0 - p) ** n) ** m,
        "null_vertex": 1.0 - (1.0 - (1.0 - p) ** m) ** n,
    }


def sparsity_probability(n: int, rate: str, a: float) -> float:
    """``a / n`` for ``rate='inverse'`` or ``n ** a / n`` for ``rate='power'``."""
    if rate == "inverse":
        p = a / n
    elif rate == "power":
        p = n ** a / n
    else:
        raise ValueError("rate must be 'inverse' or 'power'")
    return float(min(p, 1.0))


def experiment_sparsity(
    n_grid,
    rate: str = "inverse",
    a: float = 0.5,
    m_ratio: float = 1.0,
    mc_reps: int = 50,
    seed: int = 0,
) -> list[dict]:
    """Frequency of empty hyperlinks and null vertices under constant ``p``."""
    out = []
    seeds = child_seeds(seed, len(n_grid))
    for n, ss in zip(n_grid, seeds):
        m = int(round(m_ratio * n))
        p = sparsity_probability(n, rate, a)
        rng = np.random.default_rng(ss)
        empty = null = 0
        for _ in range(mc_reps):
            Y = rng.random((m, n)) < p
            hg = from_incidence(sparse.csr_array(Y))
            rep = audit(hg)
            empty += bool(rep["non_informative_links"])
            null += bool(rep["null_vertices"])
        oracle = sparsity_oracle(p, n, m)
        out.append(
            {
                "n": n,
                "m": m,
                "rate": rate,
                "a": a,
                "p": p,
                "reps": mc_reps,
                "empty_link_freq": empty / mc_reps,
                "null_vertex_freq": null / mc_reps,
                "empty_link_oracle": oracle["empty_link"],
                "null_vertex_oracle": oracle["null_vertex"],
            }
        )
    return out
