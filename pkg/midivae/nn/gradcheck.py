import logging
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from ..exceptions import InvalidParameter

logger = logging.getLogger(__name__)

GRAD_CHECK_STEP = 1e-5
GRAD_CHECK_FLOOR = 1e-8


def relative_error(analytic: float, numeric: float, floor: float = GRAD_CHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: Callable[[], Tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    step: float = GRAD_CHECK_STEP,
    max_per_tensor: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = GRAD_CHECK_FLOOR,
) -> float:
    """
    Compares the analytic gradients returned by 'f' with central differences and returns
    the largest relative error |a - n| / max(|a|, |n|, floor).

    'f' takes no arguments and reads the arrays in 'params', which are perturbed in place and
    restored afterwards. It returns (loss, gradient per name). Arrays must be float64.

    * Main use case:

    >>> x = {'x': np.array([3.0])}
    >>> grad_check(lambda: (float(x['x'][0] ** 2), {'x': 2 * x['x']}), x)

    Parameters
    ----------------
    max_per_tensor: int
        Checks this many randomly chosen entries per tensor instead of all of them.
        Field is not required. Default: None (every entry).
    rng: np.random.Generator
        Picks the entries when max_per_tensor is set.
        Field is not required. Default: np.random.default_rng(0).
    """
    for name, value in params.items():
        if value.dtype != np.float64:
            raise InvalidParameter(f"grad_check needs float64 parameters; '{name}' is {value.dtype}.")
    rng = rng if rng is not None else np.random.default_rng(0)

    _, analytic = f()
    analytic: Dict[str, np.ndarray] = {name: np.array(grad, dtype=np.float64) for name, grad in analytic.items()}

    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        grad = analytic[name].reshape(-1)
        indices = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            indices = rng.choice(flat.size, size=max_per_tensor, replace=False)
        for index in indices:
            original = flat[index]
            flat[index] = original + step
            plus, _ = f()
            flat[index] = original - step
            minus, _ = f()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * step)
            error = relative_error(float(grad[index]), numeric, floor)
            if error > worst:
                worst = error
                logger.debug(f"{name}[{index}]: analytic={grad[index]:.6e} numeric={numeric:.6e} error={error:.3e}")
    return worst
