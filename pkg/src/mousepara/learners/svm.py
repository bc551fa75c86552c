"""Soft-margin SVM with a radial kernel, trained by sequential minimal
optimization (Platt's working-set heuristics with a cached kernel matrix).

The decision value is f(x) = sum_i alpha_i y_i K(x_i, x) + b with
y in {-1, +1}; a point exactly on the boundary (f == 0) is assigned
class 1. Accuracy is the reported metric downstream, so no probability
calibration is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mousepara.learners.base import ConvergenceError, register
from mousepara.seeding import derive_rng


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class SVMParams:
    support_vectors: np.ndarray  # (s, p)
    coef: np.ndarray  # (s,) alpha_i * y_i
    b: float
    gamma: float
    converged: bool


class _SMO:
    def __init__(self, X, y_pm, C, gamma, tol, eps, rng):
        self.X = X
        self.y = y_pm
        self.C = C
        self.K = rbf_kernel(X, X, gamma)
        self.tol = tol
        self.eps = eps
        self.rng = rng
        self.n = X.shape[0]
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        # f(i) - y(i); with all alphas zero, f = 0
        self.errors = -y_pm.astype(float)

    def _non_bound(self) -> np.ndarray:
        return np.nonzero((self.alpha > self.eps) & (self.alpha < self.C - self.eps))[0]

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1_old, a2_old = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            lo = max(0.0, a1_old + a2_old - self.C)
            hi = min(self.C, a1_old + a2_old)
        else:
            lo = max(0.0, a2_old - a1_old)
            hi = min(self.C, self.C + a2_old - a1_old)
        if lo >= hi:
            return False
        k11, k12, k22 = self.K[i1, i1], self.K[i1, i2], self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # degenerate direction: evaluate the dual objective at both clip ends
            f1 = y1 * (e1 + self.b) - a1_old * k11 - s * a2_old * k12
            f2 = y2 * (e2 + self.b) - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - lo)
            h1 = a1_old + s * (a2_old - hi)
            obj_lo = (
                l1 * f1
                + lo * f2
                + 0.5 * l1 * l1 * k11
                + 0.5 * lo * lo * k22
                + s * lo * l1 * k12
            )
            obj_hi = (
                h1 * f1
                + hi * f2
                + 0.5 * h1 * h1 * k11
                + 0.5 * hi * hi * k22
                + s * hi * h1 * k12
            )
            if obj_lo < obj_hi - self.eps:
                a2 = lo
            elif obj_lo > obj_hi + self.eps:
                a2 = hi
            else:
                a2 = a2_old
        if abs(a2 - a2_old) < self.eps * (a2 + a2_old + self.eps):
            return False
        a1 = a1_old + s * (a2_old - a2)

        b_old = self.b
        b1 = e1 + y1 * (a1 - a1_old) * k11 + y2 * (a2 - a2_old) * k12 + b_old
        b2 = e2 + y1 * (a1 - a1_old) * k12 + y2 * (a2 - a2_old) * k22 + b_old
        if 0 < a1 < self.C:
            self.b = b1
        elif 0 < a2 < self.C:
            self.b = b2
        else:
            self.b = (b1 + b2) / 2.0

        self.alpha[i1] = a1
        self.alpha[i2] = a2
        self.errors += (
            y1 * (a1 - a1_old) * self.K[i1]
            + y2 * (a2 - a2_old) * self.K[i2]
            - (self.b - b_old)
        )
        return True

    def examine(self, i2: int) -> int:
        y2 = self.y[i2]
        a2 = self.alpha[i2]
        e2 = self.errors[i2]
        r2 = e2 * y2
        if (r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0):
            non_bound = self._non_bound()
            if non_bound.size > 1:
                i1 = int(non_bound[np.argmax(np.abs(self.errors[non_bound] - e2))])
                if self.take_step(i1, i2):
                    return 1
            if non_bound.size:
                start = int(self.rng.integers(non_bound.size))
                for k in range(non_bound.size):
                    if self.take_step(int(non_bound[(start + k) % non_bound.size]), i2):
                        return 1
            start = int(self.rng.integers(self.n))
            for k in range(self.n):
                if self.take_step((start + k) % self.n, i2):
                    return 1
        return 0

    def solve(self, max_sweeps: int) -> bool:
        examine_all = True
        sweeps = 0
        while sweeps < max_sweeps:
            sweeps += 1
            n_changed = 0
            targets = range(self.n) if examine_all else self._non_bound()
            for i in targets:
                n_changed += self.examine(int(i))
            if examine_all:
                if n_changed == 0:
                    return True
                examine_all = False
            elif n_changed == 0:
                examine_all = True
        return False


def fit_svm_smo(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    gamma: float,
    seed: int,
    tol: float = 1e-3,
    max_sweeps: int = 500,
) -> SVMParams:
    y_pm = np.where(np.asarray(y) == 1, 1.0, -1.0)
    rng = derive_rng(seed, "smo")
    smo = _SMO(np.asarray(X, dtype=float), y_pm, C, gamma, tol=tol, eps=1e-12, rng=rng)
    converged = smo.solve(max_sweeps)
    if not converged:
        raise ConvergenceError(
            f"SMO did not satisfy the KKT conditions within {max_sweeps} sweeps"
        )
    support = smo.alpha > smo.eps
    # decision uses f = sum coef*K + b; SMO's error cache tracked f - y with
    # b subtracted, hence the sign flip here
    return SVMParams(
        support_vectors=smo.X[support].copy(),
        coef=(smo.alpha[support] * y_pm[support]),
        b=-smo.b,
        gamma=gamma,
        converged=converged,
    )


def decision(params: SVMParams, X: np.ndarray) -> np.ndarray:
    if params.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], params.b)
    k = rbf_kernel(np.asarray(X, dtype=float), params.support_vectors, params.gamma)
    return k @ params.coef + params.b


def _fit(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    params = fit_svm_smo(
        X,
        y,
        C=hp["C"],
        gamma=hp["gamma"],
        seed=seed,
        tol=hp.get("tol", 1e-3),
        max_sweeps=hp.get("max_sweeps", 500),
    )
    return params, {"converged": params.converged, "n_support": len(params.coef)}


def _predict(params: SVMParams, X: np.ndarray) -> np.ndarray:
    return (decision(params, X) >= 0.0).astype(int)


def _export(params: SVMParams) -> dict:
    return {
        "support_vectors": params.support_vectors.tolist(),
        "coef": params.coef.tolist(),
        "b": params.b,
        "gamma": params.gamma,
        "converged": params.converged,
    }


def _import(d: dict) -> SVMParams:
    return SVMParams(
        support_vectors=np.array(d["support_vectors"], dtype=float).reshape(
            (-1, len(d["support_vectors"][0]) if d["support_vectors"] else 0)
        ),
        coef=np.array(d["coef"], dtype=float),
        b=d["b"],
        gamma=d["gamma"],
        converged=d["converged"],
    )


register("svm", _fit, _predict, None, _export, _import)
