from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from ..exceptions import InvalidParameter, ShapeMismatch

FLOAT32 = np.float32
FLOAT64 = np.float64
VALID_DTYPES = [np.dtype(FLOAT32), np.dtype(FLOAT64)]


def as_tensor(values, dtype=FLOAT32) -> np.ndarray:
    """Tensors are plain numpy arrays in one of the two supported precisions."""
    dtype = np.dtype(dtype)
    if dtype not in VALID_DTYPES:
        raise InvalidParameter(f"Must provide a valid 'dtype'. Valid options are: {VALID_DTYPES}")
    return np.asarray(values, dtype=dtype)


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class ParamStore:
    """
    Named trainable tensors with their ADAM moments, kept in insertion order.

    * Main use case:

    >>> store = ParamStore(dtype=np.float64)
    >>> store.add('dense.W', np.zeros((3, 2)))
    >>> grads = store.zeros_like()
    >>> adam_step(store, grads, lr=2e-4)

    Parameters
    ----------------
    dtype:
        np.float32 for training, np.float64 for gradient checks.
        Field is not required. Default: np.float32.
    """

    def __init__(self, dtype=FLOAT32):
        self.dtype = np.dtype(dtype)
        if self.dtype not in VALID_DTYPES:
            raise InvalidParameter(f"Must provide a valid 'dtype'. Valid options are: {VALID_DTYPES}")
        self._params: Dict[str, np.ndarray] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, value) -> np.ndarray:
        if name in self._params:
            raise InvalidParameter(f"Parameter '{name}' already exists.")
        value = np.array(value, dtype=self.dtype)
        self._params[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, value):
        current = self._params[name]
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != current.shape:
            raise ShapeMismatch(f"Parameter '{name}' has shape {current.shape}, got {value.shape}.")
        current[...] = value

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    @property
    def n_parameters(self) -> int:
        return int(sum(value.size for value in self._params.values()))

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(value) for name, value in self._params.items()}

    def values(self) -> Dict[str, np.ndarray]:
        return self._params

    def copy(self, dtype=None) -> 'ParamStore':
        other = ParamStore(dtype=self.dtype if dtype is None else dtype)
        for name, value in self._params.items():
            other.add(name, value)
            other.m[name][...] = self.m[name]
            other.v[name][...] = self.v[name]
        other.t = self.t
        return other

    def load(self, values: Mapping[str, np.ndarray], strict: bool = True):
        if strict:
            missing = set(self._params) - set(values)
            if missing:
                raise ShapeMismatch(f"Missing parameters: {sorted(missing)}")
        for name in self._params:
            if name in values:
                self[name] = values[name]

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self._params.items()}


def check_grads(store: ParamStore, grads: Mapping[str, np.ndarray], names: Optional[list] = None):
    for name in names if names is not None else store:
        if name not in grads:
            raise ShapeMismatch(f"No gradient for parameter '{name}'.")
        if grads[name].shape != store[name].shape:
            raise ShapeMismatch(f"Gradient for '{name}' has shape {grads[name].shape}, expected {store[name].shape}.")
