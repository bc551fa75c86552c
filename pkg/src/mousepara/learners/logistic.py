"""Logistic regression by iteratively reweighted least squares.

Unpenalized maximum likelihood with a deviance-change stopping rule, the
same criterion GLM fitters use, so quasi-separated data that saturates
the likelihood still terminates. The observed-information covariance is
kept for coefficient standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mousepara.learners.base import ConvergenceError, register


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LogisticParams:
    coef: np.ndarray  # (1 + p,), intercept first
    se: np.ndarray  # coefficient standard errors, same shape
    n_iter: int
    deviance: float


def fit_logistic_irls(
    X: np.ndarray,
    y: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
    w_floor: float = 1e-10,
) -> LogisticParams:
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    beta = np.zeros(p + 1)
    deviance = 2.0 * n * np.log(2.0)  # null deviance at beta = 0
    trace: list[float] = []

    def dev_of(b: np.ndarray) -> float:
        eta = design @ b
        return 2.0 * float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    for it in range(1, max_iter + 1):
        eta = design @ beta
        mu = _sigmoid(eta)
        # (quasi-)separated data saturates the likelihood; the score going
        # to zero is the convergence signal the deviance test misses
        score = design.T @ (y - mu)
        if np.max(np.abs(score)) < 1e-6 * n:
            break
        w = np.maximum(mu * (1.0 - mu), w_floor)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        candidate, _, _, _ = np.linalg.lstsq(design * sw[:, None], z * sw, rcond=None)
        new_dev = dev_of(candidate)
        halvings = 0
        while new_dev > deviance + 1e-10 and halvings < 10:
            candidate = (candidate + beta) / 2.0
            new_dev = dev_of(candidate)
            halvings += 1
        beta = candidate
        trace.append(new_dev)
        if abs(new_dev - deviance) / (abs(new_dev) + 0.1) < tol:
            deviance = new_dev
            break
        deviance = new_dev
    else:
        raise ConvergenceError(
            f"IRLS did not converge in {max_iter} iterations", trace=trace
        )
    mu = _sigmoid(design @ beta)
    w = np.maximum(mu * (1.0 - mu), w_floor)
    info = design.T @ (design * w[:, None])
    cov = np.linalg.pinv(info)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return LogisticParams(coef=beta, se=se, n_iter=it, deviance=deviance)


def _fit(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    params = fit_logistic_irls(
        X, y, max_iter=hp.get("max_iter", 100), tol=hp.get("tol", 1e-9)
    )
    return params, {"n_iter": params.n_iter, "deviance": params.deviance}


def _decision(params: LogisticParams, X: np.ndarray) -> np.ndarray:
    return params.coef[0] + X @ params.coef[1:]


def _proba(params: LogisticParams, X: np.ndarray) -> np.ndarray:
    return _sigmoid(_decision(params, X))


def _predict(params: LogisticParams, X: np.ndarray) -> np.ndarray:
    return (_proba(params, X) >= 0.5).astype(int)


def _export(params: LogisticParams) -> dict:
    return {
        "coef": params.coef.tolist(),
        "se": params.se.tolist(),
        "n_iter": params.n_iter,
        "deviance": params.deviance,
    }


def _import(d: dict) -> LogisticParams:
    return LogisticParams(
        coef=np.array(d["coef"]),
        se=np.array(d["se"]),
        n_iter=d["n_iter"],
        deviance=d["deviance"],
    )


register("logistic", _fit, _predict, _proba, _export, _import)
