"""
Linear composition of primitive CLS tokens, constraint projections and the
cross-entropy objective against the frozen classifier head.
"""
from typing import Union

import numpy as np
from scipy import special

from core.errors import DataError, NumericalError
from core.models import ConstraintMode
from vit.encoder import Model

SIMPLEX_TOL = 1e-12

Target = Union[int, np.ndarray]


def compose(weights: np.ndarray, primitive_cls: np.ndarray) -> np.ndarray:
    """Weighted sum of primitive CLS rows: Z^T eta."""
    eta = np.asarray(weights, dtype=np.float64)
    z = np.asarray(primitive_cls, dtype=np.float64)
    if z.ndim != 2 or eta.shape != (z.shape[0],):
        raise DataError(f"weights of shape {eta.shape} do not match {z.shape} primitive matrix")
    return z.T @ eta


def compose_tokens(weights: np.ndarray, primitive_tokens: np.ndarray) -> np.ndarray:
    """Broadcast scalar weights over full token matrices: (n, N, D) -> (N, D)."""
    eta = np.asarray(weights, dtype=np.float64)
    tokens = np.asarray(primitive_tokens, dtype=np.float64)
    if tokens.ndim != 3 or eta.shape != (tokens.shape[0],):
        raise DataError(f"weights of shape {eta.shape} do not match {tokens.shape} token stack")
    return np.tensordot(eta, tokens, axes=(0, 0))


def is_feasible(weights: np.ndarray, mode: ConstraintMode) -> bool:
    eta = np.asarray(weights)
    if mode == ConstraintMode.UNCONSTRAINED:
        return True
    if np.any(eta < 0):
        return False
    if mode == ConstraintMode.CONIC:
        return True
    return abs(float(np.sum(eta)) - 1.0) <= SIMPLEX_TOL


def project_simplex(weights: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based threshold).

    Works on the input shifted so its largest coordinate is 0; the rounding
    residual of the sum goes to that coordinate.
    """
    eta = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(eta)):
        raise NumericalError(f"cannot project non-finite weights {eta.tolist()}")
    top = int(np.argmax(eta))
    shifted = eta - eta[top]
    u = np.sort(shifted)[::-1]
    cumsum = np.cumsum(u)
    ranks = np.arange(1, eta.size + 1)
    # Largest rho with u_rho - (cumsum_rho - 1) / rho > 0
    support = np.nonzero(u - (cumsum - 1.0) / ranks > 0)[0]
    if support.size == 0:
        raise NumericalError(f"no simplex threshold for weights {eta.tolist()}")
    rho = int(support[-1])
    tau = (cumsum[rho] - 1.0) / (rho + 1)
    out = np.maximum(shifted - tau, 0.0)
    out[top] += 1.0 - float(np.sum(out))
    return out


def project(weights: np.ndarray, mode: ConstraintMode) -> np.ndarray:
    """Map weights onto the feasible set of `mode`; feasible input comes back unchanged."""
    eta = np.array(weights, dtype=np.float64, copy=True)
    if eta.ndim != 1 or eta.size == 0:
        raise DataError(f"weights must be a non-empty vector, got shape {eta.shape}")
    if not np.all(np.isfinite(eta)):
        raise NumericalError(f"cannot project non-finite weights {eta.tolist()}")
    if is_feasible(eta, mode):
        return eta
    if mode == ConstraintMode.CONIC:
        return np.maximum(eta, 0.0)
    return project_simplex(eta)


def initial_weights(n: int, mode: ConstraintMode) -> np.ndarray:
    """The summed baseline (all ones), projected: uniform 1/n for convex."""
    return project(np.ones(n), mode)


def head_projection(model: Model, primitive_cls: np.ndarray) -> np.ndarray:
    """Z . W_c^T, shape (n, K): logits are eta . A + b_c."""
    z = np.asarray(primitive_cls, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.config.hidden_dim:
        raise DataError(f"primitive CLS matrix {z.shape} does not match hidden_dim {model.config.hidden_dim}")
    return z @ model.params["head.weight"].T


def _target_distribution(target: Target, num_classes: int) -> np.ndarray:
    if isinstance(target, (int, np.integer)):
        if not 0 <= int(target) < num_classes:
            raise DataError(f"target class {target} outside [0, {num_classes})")
        onehot = np.zeros(num_classes)
        onehot[int(target)] = 1.0
        return onehot
    q = np.asarray(target, dtype=np.float64)
    if q.shape != (num_classes,):
        raise DataError(f"soft target has shape {q.shape}, expected ({num_classes},)")
    return q


def projected_loss_and_grad(
    projection: np.ndarray, bias: np.ndarray, weights: np.ndarray, target: Target
) -> tuple[float, np.ndarray]:
    """Cross-entropy and gradient given a precomputed head projection."""
    logits = weights @ projection + bias
    log_p = special.log_softmax(logits)
    q = _target_distribution(target, logits.shape[0])
    loss = float(-np.dot(q, log_p))
    grad = projection @ (np.exp(log_p) - q)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite loss or gradient (loss={loss}, weights={weights.tolist()})")
    return loss, grad


def loss_and_grad(
    model: Model, weights: np.ndarray, primitive_cls: np.ndarray, target: Target
) -> tuple[float, np.ndarray]:
    """Cross-entropy of classify(compose(eta, Z)) against `target` and its exact gradient.

    `target` is a class index (hard label) or a probability vector (soft target).
    """
    eta = np.asarray(weights, dtype=np.float64)
    if eta.shape != (np.shape(primitive_cls)[0],):
        raise DataError(f"weights of shape {eta.shape} do not match {np.shape(primitive_cls)} primitive matrix")
    projection = head_projection(model, primitive_cls)
    return projected_loss_and_grad(projection, model.params["head.bias"], eta, target)
