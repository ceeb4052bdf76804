from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InvalidParameter, ShapeMismatch
from .functional import sigmoid
from .params import ParamStore, glorot_uniform, orthogonal

TANH = 'tanh'
SIGMOID = 'sigmoid'
LINEAR = 'linear'
VALID_ACTIVATIONS = [TANH, SIGMOID, LINEAR]


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == TANH:
        return np.tanh(pre)
    if activation == SIGMOID:
        return sigmoid(pre)
    return pre


def _activation_backward(dy: np.ndarray, y: np.ndarray, activation: str) -> np.ndarray:
    if activation == TANH:
        return dy * (1.0 - y * y)
    if activation == SIGMOID:
        return dy * y * (1.0 - y)
    return dy


def dense(W: np.ndarray, b: np.ndarray, x: np.ndarray, activation: str = TANH) -> np.ndarray:
    """y = act(x W^T + b) over the last axis of 'x'."""
    if activation not in VALID_ACTIVATIONS:
        raise InvalidParameter(f"Must provide a valid 'activation'. Valid options are: {VALID_ACTIVATIONS}")
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeMismatch(f"dense got W {W.shape}, b {b.shape} and x {x.shape}.")
    return _activate(x @ W.T + b, activation)


def dense_backward(
    W: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    dy: np.ndarray,
    activation: str = TANH,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dW, db)."""
    dpre = _activation_backward(dy, y, activation)
    flat_dpre = dpre.reshape(-1, W.shape[0])
    dW = flat_dpre.T @ x.reshape(-1, W.shape[1])
    db = flat_dpre.sum(axis=0)
    return dpre @ W, dW, db


class Dense:
    """Fully connected layer whose weights live in a ParamStore under '<name>.W' / '<name>.b'."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, rng: np.random.Generator, activation: str = TANH):
        if activation not in VALID_ACTIVATIONS:
            raise InvalidParameter(f"Must provide a valid 'activation'. Valid options are: {VALID_ACTIVATIONS}")
        self.store = store
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        store.add(f"{name}.W", glorot_uniform(rng, n_out, n_in))
        store.add(f"{name}.b", np.zeros(n_out))

    @property
    def W(self) -> np.ndarray:
        return self.store[f"{self.name}.W"]

    @property
    def b(self) -> np.ndarray:
        return self.store[f"{self.name}.b"]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        y = dense(self.W, self.b, x, self.activation)
        return y, (x, y)

    def backward(self, dy: np.ndarray, cache: tuple, grads: Dict[str, np.ndarray]) -> np.ndarray:
        x, y = cache
        dx, dW, db = dense_backward(self.W, x, y, dy, self.activation)
        grads[f"{self.name}.W"] += dW
        grads[f"{self.name}.b"] += db
        return dx


def gru_step(W: np.ndarray, U: np.ndarray, b: np.ndarray, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """
    One GRU update. W is (3H, in), U is (3H, H), b is (3H,), gate blocks ordered
    [update z, reset r, candidate]. Returns (h', cache).
    """
    H = h.shape[-1]
    if W.shape != (3 * H, x.shape[-1]) or U.shape != (3 * H, H) or b.shape != (3 * H,):
        raise ShapeMismatch(f"gru_step got W {W.shape}, U {U.shape}, b {b.shape}, x {x.shape}, h {h.shape}.")
    gx = x @ W.T + b
    gh = h @ U[:2 * H].T
    z = sigmoid(gx[..., :H] + gh[..., :H])
    r = sigmoid(gx[..., H:2 * H] + gh[..., H:])
    n = np.tanh(gx[..., 2 * H:] + (r * h) @ U[2 * H:].T)
    return (1.0 - z) * h + z * n, (x, h, z, r, n)


def gru_step_backward(
    W: np.ndarray,
    U: np.ndarray,
    cache: tuple,
    dh_new: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dh, dW, dU, db) for one gru_step."""
    x, h, z, r, n = cache
    H = h.shape[-1]
    dgates, dh = _gate_backward(U, h, z, r, n, dh_new)
    flat = dgates.reshape(-1, 3 * H)
    dW = flat.T @ x.reshape(-1, x.shape[-1])
    dU = np.zeros_like(U)
    dU[:2 * H] = flat[:, :2 * H].T @ h.reshape(-1, H)
    dU[2 * H:] = flat[:, 2 * H:].T @ (r * h).reshape(-1, H)
    return dgates @ W, dh, dW, dU, flat.sum(axis=0)


def _gate_backward(U, h, z, r, n, dh_new):
    H = h.shape[-1]
    dn_pre = dh_new * z * (1.0 - n * n)
    dz_pre = dh_new * (n - h) * z * (1.0 - z)
    drh = dn_pre @ U[2 * H:]
    dr_pre = drh * h * r * (1.0 - r)
    dzr = np.concatenate([dz_pre, dr_pre], axis=-1)
    dh = dh_new * (1.0 - z) + drh * r + dzr @ U[:2 * H]
    return np.concatenate([dzr, dn_pre], axis=-1), dh


class GRULayer:
    """
    A single GRU layer run over whole sequences (batch x time x features).

    Parameters
    ----------------
    store: ParamStore
        Receives '<name>.W', '<name>.U' and '<name>.b'.
        Field is required.
    name: str
        Field is required.
    n_in: int
        Input features per step.
        Field is required.
    n_hidden: int
        State size.
        Field is required.
    rng: np.random.Generator
        Initializer randomness.
        Field is required.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.store = store
        self.name = name
        self.n_in = n_in
        self.n_hidden = n_hidden
        W = np.concatenate([glorot_uniform(rng, n_hidden, n_in) for _ in range(3)], axis=0)
        U = np.concatenate([orthogonal(rng, n_hidden) for _ in range(3)], axis=0)
        store.add(f"{name}.W", W)
        store.add(f"{name}.U", U)
        store.add(f"{name}.b", np.zeros(3 * n_hidden))

    def params(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.store[f"{self.name}.W"], self.store[f"{self.name}.U"], self.store[f"{self.name}.b"]

    def forward(self, X: np.ndarray, h0: np.ndarray) -> Tuple[np.ndarray, tuple]:
        W, U, b = self.params()
        batch, steps, n_in = X.shape
        H = self.n_hidden
        if n_in != self.n_in or h0.shape != (batch, H):
            raise ShapeMismatch(f"GRU '{self.name}' expects input (B, T, {self.n_in}) and state (B, {H}); got {X.shape}, {h0.shape}.")

        GX = X @ W.T + b
        Uzr = U[:2 * H].T
        Un = U[2 * H:].T
        hs = np.empty((batch, steps, H), dtype=X.dtype)
        hprev = np.empty_like(hs)
        zs = np.empty_like(hs)
        rs = np.empty_like(hs)
        ns = np.empty_like(hs)
        h = h0
        for t in range(steps):
            gx = GX[:, t]
            gh = h @ Uzr
            z = sigmoid(gx[:, :H] + gh[:, :H])
            r = sigmoid(gx[:, H:2 * H] + gh[:, H:])
            n = np.tanh(gx[:, 2 * H:] + (r * h) @ Un)
            hprev[:, t] = h
            h = (1.0 - z) * h + z * n
            hs[:, t] = h
            zs[:, t] = z
            rs[:, t] = r
            ns[:, t] = n
        return hs, (X, hprev, zs, rs, ns)

    def backward(self, dhs: np.ndarray, cache: tuple, grads: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Backpropagation through time. Returns (dX, dh0)."""
        W, U, _ = self.params()
        X, hprev, zs, rs, ns = cache
        batch, steps, _ = X.shape
        H = self.n_hidden
        dgates = np.empty((batch, steps, 3 * H), dtype=X.dtype)
        dh = np.zeros((batch, H), dtype=X.dtype)
        for t in reversed(range(steps)):
            dgates[:, t], dh = _gate_backward(U, hprev[:, t], zs[:, t], rs[:, t], ns[:, t], dhs[:, t] + dh)

        flat = dgates.reshape(-1, 3 * H)
        grads[f"{self.name}.W"] += flat.T @ X.reshape(-1, self.n_in)
        grads[f"{self.name}.b"] += flat.sum(axis=0)
        dU = grads[f"{self.name}.U"]
        dU[:2 * H] += flat[:, :2 * H].T @ hprev.reshape(-1, H)
        dU[2 * H:] += flat[:, 2 * H:].T @ (rs * hprev).reshape(-1, H)
        return dgates @ W, dh


class GRUStack:
    """Stacked GRU layers; layer l+1 reads the hidden sequence of layer l."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int, n_layers: int, rng: np.random.Generator):
        if n_layers < 1:
            raise InvalidParameter(f"'n_layers' must be >= 1. Input value: {n_layers}.")
        self.name = name
        self.n_hidden = n_hidden
        self.layers: List[GRULayer] = [
            GRULayer(store, f"{name}.{index}", n_in if index == 0 else n_hidden, n_hidden, rng)
            for index in range(n_layers)
        ]

    def __len__(self):
        return len(self.layers)

    def zero_state(self, batch: int, dtype) -> List[np.ndarray]:
        return [np.zeros((batch, self.n_hidden), dtype=dtype) for _ in self.layers]

    def forward(self, X: np.ndarray, h0: Sequence[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray], list]:
        """Returns (top-layer sequence, final state per layer, caches)."""
        if len(h0) != len(self.layers):
            raise ShapeMismatch(f"GRU stack '{self.name}' has {len(self.layers)} layers, got {len(h0)} states.")
        caches = []
        finals = []
        out = X
        for layer, h in zip(self.layers, h0):
            out, cache = layer.forward(out, h)
            caches.append(cache)
            finals.append(out[:, -1])
        return out, finals, caches

    def backward(
        self,
        dtop: Optional[np.ndarray],
        caches: list,
        grads: Dict[str, np.ndarray],
        dfinals: Optional[Sequence[Optional[np.ndarray]]] = None,
    ) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        'dtop' is the gradient on the top-layer sequence (None when only final states are
        used); 'dfinals' adds gradients on each layer's last state. Returns (dX, dh0 per layer).
        """
        dh0s: List[np.ndarray] = [None] * len(self.layers)
        dseq = dtop
        for index in reversed(range(len(self.layers))):
            X, hprev, _, _, _ = caches[index]
            if dseq is None:
                dseq = np.zeros(hprev.shape, dtype=hprev.dtype)
            else:
                dseq = dseq.copy()
            if dfinals is not None and dfinals[index] is not None:
                dseq[:, -1] += dfinals[index]
            dseq, dh0s[index] = self.layers[index].backward(dseq, caches[index], grads)
        return dseq, dh0s
