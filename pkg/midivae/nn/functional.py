from typing import Tuple

import numpy as np

from ..exceptions import InvalidParameter, ShapeMismatch

LOG_CLAMP = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(p: np.ndarray, target: np.ndarray) -> float:
    """Mean of -log p[target] over every leading position; 'target' is 1-hot on the last axis."""
    if p.shape != target.shape:
        raise ShapeMismatch(f"cross_entropy got shapes {p.shape} and {target.shape}.")
    picked = np.sum(p * target, axis=-1)
    return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))


def softmax_cross_entropy(logits: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Softmax over the last axis followed by the mean cross-entropy against integer targets.
    Returns (loss, probabilities, d loss / d logits).
    """
    if logits.shape[:-1] != target.shape:
        raise ShapeMismatch(f"softmax_cross_entropy got logits {logits.shape} and targets {target.shape}.")
    p = softmax(logits)
    flat_p = p.reshape(-1, p.shape[-1])
    flat_t = target.reshape(-1)
    picked = flat_p[np.arange(len(flat_t)), flat_t]
    loss = float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))
    return loss, p, softmax_cross_entropy_backward(p, target)


def softmax_cross_entropy_backward(p: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d mean cross-entropy / d logits, from the softmax output and integer targets."""
    flat_t = target.reshape(-1)
    grad = p.reshape(-1, p.shape[-1]).copy()
    grad[np.arange(len(flat_t)), flat_t] -= 1.0
    grad /= len(flat_t)
    return grad.reshape(p.shape)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse got shapes {a.shape} and {b.shape}.")
    return float(np.mean((a - b) ** 2))


def mse_backward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * (a - b) / a.size


def kl_diag_gaussian(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """
    KL(N(mu, diag sigma^2) || N(0, I)) summed over the last axis; 'sigma' is a standard deviation.
    """
    if mu.shape != sigma.shape:
        raise ShapeMismatch(f"kl_diag_gaussian got shapes {mu.shape} and {sigma.shape}.")
    if np.any(sigma <= 0):
        raise InvalidParameter("kl_diag_gaussian needs sigma > 0 elementwise.")
    return 0.5 * np.sum(mu ** 2 + sigma ** 2 - 2.0 * np.log(sigma) - 1.0, axis=-1)


def kl_diag_gaussian_backward(mu: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return mu.copy(), sigma - 1.0 / sigma


def kl_from_logvar(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """Same divergence with sigma = exp(logvar / 2)."""
    return 0.5 * np.sum(mu ** 2 + np.exp(logvar) - logvar - 1.0, axis=-1)


def kl_from_logvar_backward(mu: np.ndarray, logvar: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return mu.copy(), 0.5 * (np.exp(logvar) - 1.0)


def reparameterize(
    mu: np.ndarray,
    sigma: np.ndarray,
    rng: np.random.Generator,
    sigma_eps: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    z = mu + sigma * eps with eps ~ N(0, sigma_eps * I). Returns (z, eps); eps is a constant
    for the backward pass.
    """
    if sigma_eps < 0:
        raise InvalidParameter(f"sigma_eps must be >= 0. Input value: {sigma_eps}.")
    eps = (rng.standard_normal(mu.shape) * np.sqrt(sigma_eps)).astype(mu.dtype)
    return mu + sigma * eps, eps


def reparameterize_backward(dz: np.ndarray, eps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (d mu, d sigma)."""
    return dz, dz * eps
