"""Node-conditional exponential-family fits and their BIC/EBIC evidence.

Each variable is regressed on a candidate neighbour set with the family
matching its kind: ordinary least squares with profiled error variance for
Gaussian targets, logistic regression for binary targets, and log-link
Poisson regression for count targets. The maximized conditional
log-likelihood feeds the (extended) BIC, whose exponential approximates the
marginal likelihood of the neighbourhood model.

All functions here are pure in their inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln

from .errors import InvalidInputError, RankDeficiencyError

# IRLS controls; see module docs for the rationale of each guard.
MAX_IRLS_ITER = 50
COEF_TOL = 1e-8
RIDGE = 1e-6
COEF_CLAMP = 30.0
# Floor for the profiled Gaussian error variance: keeps the log-likelihood
# finite when a neighbourhood fits the target exactly.
VAR_FLOOR = 1e-8

CRITERIA = ("bic", "ebic")
PRIORS = ("dm", "ny", "sb")


class Kind(str, Enum):
    """Variable kind; values match the CSV header codes."""

    GAUSSIAN = "g"
    BINARY = "b"
    COUNT = "c"


@dataclass(frozen=True)
class Dataset:
    """An n x p observation matrix with one kind per column.

    Binary columns must contain only 0/1, count columns only non-negative
    integers, and no entry may be missing or non-finite; ingestion rejects
    offending files before a Dataset is ever built.
    """

    values: np.ndarray
    kinds: tuple[Kind, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kinds", tuple(Kind(k) for k in self.kinds))
        if values.ndim != 2:
            raise InvalidInputError("values must be a 2-d array of shape (n, p)")
        if values.shape[1] != len(self.kinds):
            raise InvalidInputError(
                f"{values.shape[1]} columns but {len(self.kinds)} kinds"
            )
        if not np.isfinite(values).all():
            bad = int(np.size(values) - np.isfinite(values).sum())
            raise InvalidInputError(f"{bad} missing or non-finite values")
        for j, kind in enumerate(self.kinds):
            col = values[:, j]
            if kind is Kind.BINARY and not np.isin(col, (0.0, 1.0)).all():
                raise InvalidInputError(f"binary column {j} has values outside {{0,1}}")
            if kind is Kind.COUNT and ((col < 0) | (col != np.floor(col))).any():
                raise InvalidInputError(
                    f"count column {j} has negative or non-integer values"
                )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]


@dataclass(frozen=True)
class GlmFit:
    """Result of one node-conditional fit.

    ``coefficients`` holds the intercept first, then one entry per neighbour
    in the order they were passed. ``loglik`` is the maximized conditional
    log-likelihood; it is finite whenever ``converged`` is true.
    """

    coefficients: np.ndarray
    loglik: float
    k: int
    converged: bool


@dataclass(frozen=True)
class ScoreConfig:
    """Evidence criterion and model-space prior settings."""

    criterion: str = "ebic"
    gamma: float = 0.5
    prior: str = "dm"
    prior_a: float = 0.5

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise InvalidInputError(f"criterion must be one of {CRITERIA}")
        if self.prior not in PRIORS:
            raise InvalidInputError(f"prior must be one of {PRIORS}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        a = self.prior_a
        ok = {
            "dm": 0.0 < a <= 1.0,
            "ny": 0.0 <= a <= 1.0,
            "sb": 0.0 < a < 1.0,
        }[self.prior]
        if not ok:
            raise InvalidInputError(
                f"prior_a={a} is outside the valid range for the {self.prior} prior"
            )


def _design(data: Dataset, target: int, neighbours: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    n = data.n
    if not 0 <= target < data.p:
        raise InvalidInputError(f"target {target} out of range for p={data.p}")
    seen = set()
    for u in neighbours:
        if u == target:
            raise InvalidInputError(f"target {target} cannot be its own neighbour")
        if not 0 <= u < data.p:
            raise InvalidInputError(f"neighbour {u} out of range for p={data.p}")
        if u in seen:
            raise InvalidInputError(f"duplicate neighbour {u}")
        seen.add(u)
    X = np.empty((n, len(neighbours) + 1))
    X[:, 0] = 1.0
    for i, u in enumerate(neighbours):
        X[:, i + 1] = data.values[:, u]
    return X, data.values[:, target]


def gaussian_loglik_from_rss(rss: float, n: int) -> float:
    """Profiled-variance Gaussian log-likelihood given the residual sum of squares."""
    sigma2 = max(rss / n, VAR_FLOOR)
    return -0.5 * n * math.log(2.0 * math.pi * sigma2) - rss / (2.0 * sigma2)


def _fit_gaussian(X: np.ndarray, y: np.ndarray) -> GlmFit:
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    loglik = gaussian_loglik_from_rss(rss, len(y))
    return GlmFit(coefficients=beta, loglik=loglik, k=X.shape[1] - 1, converged=True)


def binary_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^eta) via logaddexp for stability at large |eta|
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def poisson_loglik(eta: np.ndarray, y: np.ndarray, log_y_fact: float | None = None) -> float:
    if log_y_fact is None:
        log_y_fact = float(gammaln(y + 1.0).sum())
    with np.errstate(over="ignore"):
        mu_sum = float(np.exp(eta).sum())
    return float(y @ eta) - mu_sum - log_y_fact


def irls_fit(X: np.ndarray, y: np.ndarray, kind: Kind) -> GlmFit:
    """Iteratively reweighted least squares for logistic and Poisson targets.

    Newton steps on the ridge-damped normal equations; coefficients are
    clamped to +-COEF_CLAMP so that perfect separation (logistic) and mean
    blow-up (Poisson) terminate with ``converged=False`` instead of
    overflowing.
    """
    n, d = X.shape
    beta = np.zeros(d)
    eye = np.eye(d)
    converged = False
    for _ in range(MAX_IRLS_ITER):
        eta = X @ beta
        if kind is Kind.BINARY:
            mu = expit(eta)
            w = np.maximum(mu * (1.0 - mu), 1e-10)
        else:
            mu = np.exp(np.clip(eta, -COEF_CLAMP, COEF_CLAMP))
            w = mu
        grad = X.T @ (y - mu)
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess + RIDGE * eye, grad)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError("singular weighted normal equations") from exc
        beta_new = np.clip(beta + step, -COEF_CLAMP, COEF_CLAMP)
        delta = np.max(np.abs(beta_new - beta))
        beta = beta_new
        if delta < COEF_TOL:
            converged = True
            break
    if np.any(np.abs(beta) >= COEF_CLAMP):
        converged = False
    eta = X @ beta
    if kind is Kind.BINARY:
        loglik = binary_loglik(eta, y)
    else:
        loglik = poisson_loglik(eta, y)
    if not math.isfinite(loglik):
        converged = False
    return GlmFit(coefficients=beta, loglik=loglik, k=d - 1, converged=converged)


def fit_node(data: Dataset, target: int, neighbours: Sequence[int]) -> GlmFit:
    """Fit the conditional model of ``target`` given the listed neighbours.

    Dispatches on the target's kind: Gaussian -> OLS with profiled variance,
    binary -> logistic IRLS, count -> Poisson IRLS.

    Raises RankDeficiencyError when the design is collinear or has fewer
    than k+2 rows.
    """
    X, y = _design(data, target, neighbours)
    n, d = X.shape
    if n < d + 1:
        raise RankDeficiencyError(
            f"need at least k+2={d + 1} rows for {d - 1} neighbours, have {n}"
        )
    if np.linalg.matrix_rank(X) < d:
        raise RankDeficiencyError(f"collinear design for target {target}")
    if data.kinds[target] is Kind.GAUSSIAN:
        return _fit_gaussian(X, y)
    return irls_fit(X, y, data.kinds[target])


def conditional_loglik(
    data: Dataset, target: int, neighbours: Sequence[int], coefficients: np.ndarray
) -> float:
    """Conditional log-likelihood of the target at arbitrary coefficients.

    The Gaussian family profiles the error variance at its maximizer for the
    given coefficients, so this is the same objective ``fit_node`` maximizes.
    """
    X, y = _design(data, target, neighbours)
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (X.shape[1],):
        raise InvalidInputError(
            f"expected {X.shape[1]} coefficients, got {coefficients.shape}"
        )
    eta = X @ coefficients
    kind = data.kinds[target]
    if kind is Kind.GAUSSIAN:
        resid = y - eta
        return gaussian_loglik_from_rss(float(resid @ resid), len(y))
    if kind is Kind.BINARY:
        return binary_loglik(eta, y)
    return poisson_loglik(eta, y)


def loglik_gradient(
    data: Dataset, target: int, neighbours: Sequence[int], coefficients: np.ndarray
) -> np.ndarray:
    """Analytic gradient of ``conditional_loglik`` in the coefficients."""
    X, y = _design(data, target, neighbours)
    coefficients = np.asarray(coefficients, dtype=float)
    eta = X @ coefficients
    kind = data.kinds[target]
    if kind is Kind.GAUSSIAN:
        resid = y - eta
        sigma2 = max(float(resid @ resid) / len(y), VAR_FLOOR)
        return X.T @ resid / sigma2
    if kind is Kind.BINARY:
        return X.T @ (y - expit(eta))
    return X.T @ (y - np.exp(np.clip(eta, -COEF_CLAMP, COEF_CLAMP)))


def log_binomial(n: int, k: int) -> float:
    """log of the binomial coefficient C(n, k), exact integer arithmetic inside."""
    if k < 0 or k > n:
        raise InvalidInputError(f"C({n}, {k}) is undefined here")
    return math.log(math.comb(n, k))


def score(fit: GlmFit, n: int, p: int, config: ScoreConfig) -> float:
    """BIC or EBIC of a fitted neighbourhood model; +inf for failed fits.

    The model dimension is k+1 (intercept plus one coefficient per
    neighbour); the EBIC term counts same-size neighbourhoods drawn from the
    p-1 candidates.
    """
    if n < 1:
        raise InvalidInputError(f"sample count must be positive, got {n}")
    if fit.k > p - 1:
        raise InvalidInputError(f"{fit.k} neighbours is impossible with p={p}")
    if not fit.converged:
        return math.inf
    value = -2.0 * fit.loglik + (fit.k + 1) * math.log(n)
    if config.criterion == "ebic":
        value += 2.0 * config.gamma * log_binomial(p - 1, fit.k)
    return value


def log_evidence(fit: GlmFit, n: int, p: int, config: ScoreConfig) -> float:
    """Log marginal-likelihood approximation, -score/2; -inf for failed fits."""
    return -0.5 * score(fit, n, p, config)
