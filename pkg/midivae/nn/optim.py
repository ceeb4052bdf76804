from typing import Mapping

import numpy as np

from .params import ParamStore, check_grads


def adam_step(
    store: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """
    Bias-corrected ADAM update applied in place to every parameter of 'store'.

    Parameters
    ----------------
    store: ParamStore
        Parameters plus their moment estimates. The step counter is incremented.
        Field is required.
    grads: dict
        Gradient per parameter name, same shapes as the store.
        Field is required.
    lr: float
        Learning rate.
        Field is required.
    beta1: float
        Field is not required. Default: 0.9.
    beta2: float
        Field is not required. Default: 0.999.
    eps: float
        Field is not required. Default: 1e-8.
    """
    check_grads(store, grads)
    store.t += 1
    correction1 = 1.0 - beta1 ** store.t
    correction2 = 1.0 - beta2 ** store.t
    for name, param in store.items():
        g = np.asarray(grads[name], dtype=store.dtype)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param -= (lr * (m / correction1) / (np.sqrt(v / correction2) + eps)).astype(store.dtype)
    return store
