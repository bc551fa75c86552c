"""Single-hidden-layer network trained by backpropagation.

Logistic activations in the hidden layer and at the output. The loss is
the mean cross-entropy plus a weight-decay penalty lambda * sum(w^2) over
the connection weights (biases are not penalized). Training runs several
random restarts of full-batch gradient descent with a backtracking line
search and keeps the parameters with the best penalized training loss.

``nn_loss_and_grad`` exposes the analytic gradient on the flat parameter
vector so it can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mousepara.learners.base import register
from mousepara.seeding import derive_rng


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class NNParams:
    w_hidden: np.ndarray  # (h, p)
    b_hidden: np.ndarray  # (h,)
    w_out: np.ndarray  # (h,)
    b_out: float
    decay: float


def n_parameters(p: int, hidden: int) -> int:
    return hidden * p + hidden + hidden + 1


def pack_params(params: NNParams) -> np.ndarray:
    return np.concatenate(
        [params.w_hidden.ravel(), params.b_hidden, params.w_out, [params.b_out]]
    )


def unpack_params(theta: np.ndarray, p: int, hidden: int, decay: float) -> NNParams:
    hp = hidden * p
    return NNParams(
        w_hidden=theta[:hp].reshape(hidden, p),
        b_hidden=theta[hp : hp + hidden],
        w_out=theta[hp + hidden : hp + 2 * hidden],
        b_out=float(theta[-1]),
        decay=decay,
    )


def weight_mask(p: int, hidden: int) -> np.ndarray:
    """True on coordinates carrying connection weights (decay applies)."""
    mask = np.zeros(n_parameters(p, hidden), dtype=bool)
    hp = hidden * p
    mask[:hp] = True
    mask[hp + hidden : hp + 2 * hidden] = True
    return mask


def init_params(p: int, hidden: int, decay: float, rng: np.random.Generator) -> NNParams:
    return NNParams(
        w_hidden=rng.uniform(-0.5, 0.5, size=(hidden, p)),
        b_hidden=rng.uniform(-0.5, 0.5, size=hidden),
        w_out=rng.uniform(-0.5, 0.5, size=hidden),
        b_out=float(rng.uniform(-0.5, 0.5)),
        decay=decay,
    )


def _forward(params: NNParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = _sigmoid(X @ params.w_hidden.T + params.b_hidden)
    z = hidden @ params.w_out + params.b_out
    return hidden, z


def nn_loss_and_grad(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, hidden: int, decay: float
) -> tuple[float, np.ndarray]:
    """Penalized cross-entropy loss and its gradient on the flat vector."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    params = unpack_params(np.asarray(theta, dtype=float), p, hidden, decay)
    h_act, z = _forward(params, X)
    prob = _sigmoid(z)
    # mean cross-entropy in the softplus form: stable for saturated outputs
    ce = float(np.mean(np.logaddexp(0.0, z) - y * z))
    penalty = decay * (float(np.sum(params.w_hidden**2)) + float(np.sum(params.w_out**2)))
    loss = ce + penalty

    dz = (prob - y) / n  # (n,)
    g_w_out = h_act.T @ dz + 2.0 * decay * params.w_out
    g_b_out = float(dz.sum())
    dh = np.outer(dz, params.w_out)  # (n, h)
    da = dh * h_act * (1.0 - h_act)
    g_w_hidden = da.T @ X + 2.0 * decay * params.w_hidden
    g_b_hidden = da.sum(axis=0)
    grad = np.concatenate([g_w_hidden.ravel(), g_b_hidden, g_w_out, [g_b_out]])
    return loss, grad


def _minimize(
    theta0: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    hidden: int,
    decay: float,
    max_iter: int,
) -> tuple[np.ndarray, float]:
    theta = theta0.copy()
    loss, grad = nn_loss_and_grad(theta, X, y, hidden, decay)
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float(grad @ grad)
        if gnorm2 < 1e-16:
            break
        accepted = False
        while step >= 1e-12:
            cand = theta - step * grad
            cand_loss, cand_grad = nn_loss_and_grad(cand, X, y, hidden, decay)
            if cand_loss <= loss - 1e-4 * step * gnorm2:
                theta, loss, grad = cand, cand_loss, cand_grad
                step = min(step * 1.5, 1e3)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return theta, loss


def fit_neural_net(
    X: np.ndarray,
    y: np.ndarray,
    hidden: int,
    decay: float,
    seed: int,
    restarts: int = 5,
    max_iter: int = 400,
) -> tuple[NNParams, dict]:
    p = X.shape[1]
    best_theta = None
    best_loss = np.inf
    for r in range(restarts):
        rng = derive_rng(seed, "nn_restart", r)
        theta0 = pack_params(init_params(p, hidden, decay, rng))
        theta, loss = _minimize(theta0, X, y, hidden, decay, max_iter)
        if loss < best_loss:
            best_loss = loss
            best_theta = theta
    params = unpack_params(best_theta, p, hidden, decay)
    return params, {"best_penalized_loss": best_loss, "restarts": restarts}


def _fit(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    return fit_neural_net(
        X,
        y,
        hidden=hp["hidden"],
        decay=hp["decay"],
        seed=seed,
        restarts=hp.get("restarts", 5),
        max_iter=hp.get("max_iter", 400),
    )


def _proba(params: NNParams, X: np.ndarray) -> np.ndarray:
    _, z = _forward(params, np.asarray(X, dtype=float))
    return _sigmoid(z)


def _predict(params: NNParams, X: np.ndarray) -> np.ndarray:
    return (_proba(params, X) >= 0.5).astype(int)


def _export(params: NNParams) -> dict:
    return {
        "w_hidden": params.w_hidden.tolist(),
        "b_hidden": params.b_hidden.tolist(),
        "w_out": params.w_out.tolist(),
        "b_out": params.b_out,
        "decay": params.decay,
    }


def _import(d: dict) -> NNParams:
    return NNParams(
        w_hidden=np.array(d["w_hidden"], dtype=float),
        b_hidden=np.array(d["b_hidden"], dtype=float),
        w_out=np.array(d["w_out"], dtype=float),
        b_out=d["b_out"],
        decay=d["decay"],
    )


register("neural_net", _fit, _predict, _proba, _export, _import)
