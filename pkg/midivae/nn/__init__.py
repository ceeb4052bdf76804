from .params import FLOAT32, FLOAT64, ParamStore, as_tensor, glorot_uniform, orthogonal
from .functional import (
    cross_entropy,
    kl_diag_gaussian,
    kl_diag_gaussian_backward,
    kl_from_logvar,
    kl_from_logvar_backward,
    mse,
    mse_backward,
    reparameterize,
    reparameterize_backward,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from .layers import Dense, GRULayer, GRUStack, dense, dense_backward, gru_step, gru_step_backward
from .optim import adam_step
from .gradcheck import grad_check, relative_error
from .checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
