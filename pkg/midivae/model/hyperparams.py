from dataclasses import asdict, dataclass, fields
from typing import Mapping

from ..exceptions import InvalidParameter


@dataclass(frozen=True)
class HyperParams:
    """
    Every scalar the model, its training loop and the evaluation classifiers are tuned by.

    * Main use case:

    >>> hp = HyperParams(latent_dim=64, gru_state=64, batch_size=16)
    >>> model = MidiVae(hp, RollConfig())

    Parameters
    ----------------
    lambda_p, lambda_i, lambda_v, lambda_s: float
        Loss weights of the pitch, instrument, velocity and style terms.
        Field is not required. Default: 1.0, 1.0, 1.0, 0.1.
    beta: float
        KL weight.
        Field is not required. Default: 0.1.
    sigma_eps: float
        Variance of the reparameterization noise.
        Field is not required. Default: 0.01.
    latent_dim: int
        Field is not required. Default: 256.
    gru_state: int
        State size of every encoder/decoder GRU layer.
        Field is not required. Default: 256.
    pitch_layers: int
        GRU layers of the pitch encoder and decoder.
        Field is not required. Default: 2.
    other_layers: int
        GRU layers of the velocity and instrument encoders/decoders.
        Field is not required. Default: 1.
    dense_layers: int
        Fully connected tanh layers between the encoder states and the latent heads.
        Field is not required. Default: 2.
    dense_size: int
        Field is not required. Default: 256.
    lr: float
        ADAM learning rate.
        Field is not required. Default: 0.0002.
    batch_size: int
        Parallel song slots per optimizer step.
        Field is not required. Default: 32.
    k: int
        Number of styles, i.e. latent dimensions read by the style head.
        Field is not required. Default: 2.
    epochs: int
        Upper bound on training epochs.
        Field is not required. Default: 200.
    patience: int
        Stop after this many epochs without a better test pitch accuracy.
        Field is not required. Default: 20.
    classifier_state, classifier_layers, classifier_epochs, classifier_batch_size: int
        Evaluation style classifiers.
        Field is not required. Default: 256, 2, 20, 64.
    classifier_lr: float
        ADAM learning rate of the evaluation classifiers.
        Field is not required. Default: 0.001.
    seed: int
        Field is not required. Default: 0.
    """
    lambda_p: float = 1.0
    lambda_i: float = 1.0
    lambda_v: float = 1.0
    lambda_s: float = 0.1
    beta: float = 0.1
    sigma_eps: float = 0.01
    latent_dim: int = 256
    gru_state: int = 256
    pitch_layers: int = 2
    other_layers: int = 1
    dense_layers: int = 2
    dense_size: int = 256
    lr: float = 0.0002
    batch_size: int = 32
    k: int = 2
    epochs: int = 200
    patience: int = 20
    classifier_state: int = 256
    classifier_layers: int = 2
    classifier_epochs: int = 20
    classifier_batch_size: int = 64
    classifier_lr: float = 0.001
    seed: int = 0

    def __post_init__(self):
        for name in ('lambda_p', 'lambda_i', 'lambda_v', 'lambda_s', 'beta', 'sigma_eps'):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"'{name}' must be >= 0. Input value: {getattr(self, name)}.")
        for name in ('latent_dim', 'gru_state', 'pitch_layers', 'other_layers', 'dense_size', 'batch_size',
                     'k', 'epochs', 'patience', 'classifier_state', 'classifier_layers', 'classifier_epochs',
                     'classifier_batch_size'):
            if getattr(self, name) < 1:
                raise InvalidParameter(f"'{name}' must be >= 1. Input value: {getattr(self, name)}.")
        if self.dense_layers < 0:
            raise InvalidParameter(f"'dense_layers' must be >= 0. Input value: {self.dense_layers}.")
        for name in ('lr', 'classifier_lr'):
            if getattr(self, name) <= 0:
                raise InvalidParameter(f"'{name}' must be > 0. Input value: {getattr(self, name)}.")
        if self.k < 2 or self.k > self.latent_dim:
            raise InvalidParameter(f"'k' must lie in [2, latent_dim={self.latent_dim}]. Input value: {self.k}.")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping) -> 'HyperParams':
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise InvalidParameter(f"Unknown hyperparameters: {sorted(unknown)}. Valid options are: {sorted(known)}")
        return cls(**{name: _coerce(cls, name, value) for name, value in values.items()})


def _coerce(cls, name: str, value):
    default = getattr(cls, name)
    try:
        return int(value) if isinstance(default, int) else float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidParameter(f"Hyperparameter '{name}' must be numeric. Input value: {value!r}.") from exc
