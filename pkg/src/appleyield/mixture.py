"""Multivariate Gaussian mixture numerics: EM fitting, log-likelihood,
closed-form KL divergence and BIC model selection.

This is the shared engine behind both the color model (LAB space) and the
spatial fruit counter (pixel coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import InsufficientDataError, NumericalError, ValidationError

_SYM_TOL = 1e-9


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.covariance, dtype=np.float64)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValidationError(f"covariance shape {cov.shape} does not match dim {d}")
        if np.abs(cov - cov.T).max() >= _SYM_TOL:
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _chol(self):
        try:
            return linalg.cholesky(self.covariance, lower=True)
        except linalg.LinAlgError as e:
            raise NumericalError(f"covariance not positive definite: {e}") from e

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        chol = self._chol()
        diff = x - self.mean
        sol = linalg.solve_triangular(chol, diff.T, lower=True)
        maha = np.sum(sol**2, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * (self.dim * np.log(2 * np.pi) + logdet + maha)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Gaussian":
        return Gaussian(np.array(d["mean"]), np.array(d["covariance"]))


@dataclass(frozen=True)
class MixtureModel:
    components: list[Gaussian]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(self.components) < 1 or len(self.components) != w.shape[0]:
            raise ValidationError("weights must match component count (>= 1)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("weights must lie on the simplex")
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def component_log_densities(self, points: np.ndarray) -> np.ndarray:
        """(n, k) matrix of log(pi_i) + log N(x | mu_i, Sigma_i)."""
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty((x.shape[0], self.k))
        for i, (g, w) in enumerate(zip(self.components, self.weights)):
            out[:, i] = np.log(max(w, 1e-300)) + g.log_pdf(x)
        return out

    def to_dict(self) -> dict:
        return {
            "components": [g.to_dict() for g in self.components],
            "weights": self.weights.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "MixtureModel":
        return MixtureModel(
            [Gaussian.from_dict(g) for g in d["components"]], np.array(d["weights"])
        )


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 100
    tolerance: float = 1e-4  # relative log-likelihood change
    rng_seed: int = 0
    covariance_floor: float = 1e-6
    init: str = "kmeans++"  # or "provided"
    init_means: np.ndarray | None = None

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValidationError("tolerance must be > 0 and max_iterations >= 1")


def _kmeanspp_means(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    means = np.empty((k, points.shape[1]))
    means[0] = points[rng.integers(n)]
    d2 = np.sum((points - means[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining mass at already-chosen centers; duplicate one
            means[i] = points[rng.integers(n)]
            continue
        means[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - means[i]) ** 2, axis=1))
    # a few Lloyd sweeps sharpen the seeds and keep EM out of merged-cluster
    # local optima on spatial data
    for _ in range(10):
        d = ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        assign = d.argmin(axis=1)
        new = means.copy()
        for i in range(k):
            member = points[assign == i]
            if len(member):
                new[i] = member.mean(axis=0)
        if np.allclose(new, means):
            break
        means = new
    return means


def responsibilities(model: MixtureModel, points: np.ndarray) -> np.ndarray:
    """E-step: per-point posterior over components; rows sum to 1."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValidationError(f"point dim {x.shape[1]} != model dim {model.dim}")
    logp = model.component_log_densities(x)
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def log_likelihood(model: MixtureModel, points: np.ndarray) -> float:
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    logp = model.component_log_densities(points)
    return float(logsumexp(logp, axis=1).sum())


def fit_gmm(
    points: np.ndarray, k: int, cfg: EmConfig = EmConfig()
) -> tuple[MixtureModel, float]:
    """EM fit of a k-component mixture; returns (model, final log-likelihood).

    The log-likelihood is non-decreasing across iterations up to the
    covariance floor applied each M-step.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = x.shape
    if n < k:
        raise InsufficientDataError(f"{n} points cannot support {k} components")

    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.init == "provided":
        if cfg.init_means is None:
            raise ValidationError("init='provided' requires init_means")
        means = np.array(cfg.init_means, dtype=np.float64)
    else:
        means = _kmeanspp_means(x, k, rng)

    floor = cfg.covariance_floor * np.eye(d)
    base_cov = np.cov(x.T).reshape(d, d) if n > 1 else np.zeros((d, d))
    # seed covariances/weights from the hard partition around the initial
    # means; a shared global covariance lets the first E-steps wash out
    # well-separated seeds and EM drifts into merged local optima
    assign = np.argmin(((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2), axis=1)
    covs = np.empty((k, d, d))
    weights = np.empty(k)
    for i in range(k):
        member = x[assign == i]
        weights[i] = max(len(member), 1)
        if len(member) > 1:
            c = np.cov(member.T).reshape(d, d)
        else:
            c = base_cov
        covs[i] = 0.5 * (c + c.T) + floor
    weights /= weights.sum()

    model = MixtureModel([Gaussian(m, c) for m, c in zip(means, covs)], weights)
    prev_ll = -np.inf
    ll = log_likelihood(model, x)
    for _ in range(cfg.max_iterations):
        resp = responsibilities(model, x)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / nk.sum()
        comps = []
        for i in range(k):
            mu = resp[:, i] @ x / nk[i]
            diff = x - mu
            cov = (resp[:, i][:, None] * diff).T @ diff / nk[i]
            cov = 0.5 * (cov + cov.T) + floor
            comps.append(Gaussian(mu, cov))
        model = MixtureModel(comps, weights)
        prev_ll, ll = ll, log_likelihood(model, x)
        if abs(ll - prev_ll) < cfg.tolerance * max(abs(prev_ll), 1.0):
            break
    return model, ll


def kl_gaussian(p: Gaussian, q: Gaussian) -> float:
    """Closed-form KL(p || q) between multivariate normals (>= 0)."""
    if p.dim != q.dim:
        raise ValidationError(f"dim mismatch {p.dim} vs {q.dim}")
    d = p.dim
    try:
        chol_q = linalg.cholesky(q.covariance, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"q covariance singular: {e}") from e
    chol_p = p._chol()
    # tr(Sq^-1 Sp) via triangular solve against the Cholesky factor of Sp
    a = linalg.solve_triangular(chol_q, chol_p, lower=True)
    trace = np.sum(a**2)
    diff = q.mean - p.mean
    sol = linalg.solve_triangular(chol_q, diff, lower=True)
    maha = float(sol @ sol)
    logdet_q = 2.0 * np.sum(np.log(np.diag(chol_q)))
    logdet_p = 2.0 * np.sum(np.log(np.diag(chol_p)))
    return max(0.0, 0.5 * (trace + maha - d + logdet_q - logdet_p))


def bic(model: MixtureModel, points: np.ndarray, final_ll: float) -> float:
    """Penalized likelihood: p*ln(n) - 2*LL, with p the free parameter count."""
    n = np.atleast_2d(np.asarray(points)).shape[0]
    if n < 1:
        raise ValidationError("BIC needs at least one point")
    d = model.dim
    p = model.k * (d + d * (d + 1) // 2) + (model.k - 1)
    return p * np.log(n) - 2.0 * final_ll
