import logging
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..config import ONSET_THRESHOLD, SWEEP_POINTS, SWEEP_SCALE
from ..exceptions import InvalidParameter
from ..midi.roll_codec import RollConfig
from ..model.vae import BarBatch, DecoderOutput, MidiVae
from .ensemble import EnsembleClassifier

logger = logging.getLogger(__name__)

STATS = ['mean', 'max', 'min', 'range']


def sweep_metric_names(n_tracks: int = 4) -> List[str]:
    names = ['total_onsets', 'total_held']
    names += [f"pitch_{stat}" for stat in STATS]
    names += [f"track{track}_pitch_{stat}" for track in range(n_tracks) for stat in STATS]
    names += [f"onset_velocity_{stat}" for stat in STATS]
    names.append('style_probability')
    return names


SWEEP_METRIC_NAMES = sweep_metric_names()


def _summary(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """mean/max/min/range of values[mask] per row (B x cells); rows without any cell get 0."""
    count = mask.sum(axis=-1)
    present = count > 0
    mean = np.where(present, np.where(mask, values, 0.0).sum(axis=-1) / np.maximum(count, 1), 0.0)
    high = np.where(present, np.where(mask, values, -np.inf).max(axis=-1), 0.0)
    low = np.where(present, np.where(mask, values, np.inf).min(axis=-1), 0.0)
    return np.stack([mean, high, low, high - low], axis=-1)


def bar_metrics(pitch: np.ndarray, velocity: np.ndarray, cfg: RollConfig, style_probability: np.ndarray) -> np.ndarray:
    """
    Sweep metrics of B bars (B x n_steps x n_tracks rolls) in SWEEP_METRIC_NAMES order.
    Pitches are MIDI numbers; velocities stay on the [0, 1] roll scale.
    """
    pitch = np.asarray(pitch).reshape(-1, cfg.n_steps, cfg.n_tracks)
    velocity = np.asarray(velocity, dtype=np.float64).reshape(pitch.shape)
    n = len(pitch)
    sounding = pitch != cfg.silence_index
    onsets = sounding & (velocity > ONSET_THRESHOLD)
    held = sounding & ~onsets
    midi = (pitch + cfg.pitch_lo).astype(np.float64)

    columns = [onsets.reshape(n, -1).sum(axis=-1)[:, None], held.reshape(n, -1).sum(axis=-1)[:, None]]
    columns.append(_summary(midi.reshape(n, -1), sounding.reshape(n, -1)))
    for track in range(cfg.n_tracks):
        columns.append(_summary(midi[:, :, track], sounding[:, :, track]))
    columns.append(_summary(velocity.reshape(n, -1), onsets.reshape(n, -1)))
    columns.append(np.asarray(style_probability, dtype=np.float64).reshape(n, 1))
    return np.concatenate(columns, axis=-1).astype(np.float64)


def decoded_batch(output: DecoderOutput, cfg: RollConfig) -> BarBatch:
    """Decoder argmax/regression output as classifier input; style labels are placeholders."""
    return BarBatch(
        pitch=output.pitch_symbols(cfg).astype(np.int64),
        velocity=np.clip(output.velocity_roll(cfg), 0.0, 1.0),
        instruments=output.programs().astype(np.int64),
        style=np.zeros(len(output), dtype=np.int64),
    )


def decoded_metrics(output: DecoderOutput, cfg: RollConfig, ensemble: EnsembleClassifier) -> np.ndarray:
    batch = decoded_batch(output, cfg)
    style_probability = ensemble.mean_probability(batch)[:, 0]
    return bar_metrics(batch.pitch, batch.velocity, cfg, style_probability)


def pearson_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Correlation of x (D x P) with every column of y (D x P x M) along P. A metric that does
    not vary over the sweep gets 0.
    """
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    numerator = np.einsum('dp,dpm->dm', xc, yc)
    denominator = np.sqrt((xc ** 2).sum(axis=1))[:, None] * np.sqrt((yc ** 2).sum(axis=1))
    constant = np.ptp(y, axis=1) == 0
    with np.errstate(divide='ignore', invalid='ignore'):
        corr = numerator / denominator
    return np.where(constant | ~(denominator > 0), 0.0, corr)


def latent_sweep(
    model: MidiVae,
    latents: np.ndarray,
    ensemble: EnsembleClassifier,
    sigma: np.ndarray,
    points: int = SWEEP_POINTS,
    scale: float = SWEEP_SCALE,
    dims: Optional[Sequence[int]] = None,
    batch_size: Optional[int] = None,
) -> pd.DataFrame:
    """
    For each latent dimension, moves that dimension alone over linspace(-scale*sigma, scale*sigma,
    points) starting from every sample latent, decodes each point from a fresh state and
    correlates the dimension value with every sweep metric. Correlations are averaged over the
    samples; the result has one row per dimension and one column per metric.

    Parameters
    ----------------
    latents: np.ndarray
        Sample bar latents (S x latent_dim).
        Field is required.
    sigma: np.ndarray
        Spread per dimension, usually LatentStats.sigma_hat.
        Field is required.
    points: int
        Field is not required. Default: 7.
    scale: float
        Field is not required. Default: 3.0.
    dims: list of int
        Field is not required. Default: every dimension.
    batch_size: int
        Rows decoded at once. Field is not required. Default: the model's batch size.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    sigma = np.asarray(sigma, dtype=np.float64)
    if points < 2:
        raise InvalidParameter(f"'points' must be >= 2. Input value: {points}.")
    if latents.shape[1] != model.hp.latent_dim or sigma.shape != (model.hp.latent_dim,):
        raise InvalidParameter(f"latents and sigma must have {model.hp.latent_dim} dimensions.")
    dims = np.arange(model.hp.latent_dim) if dims is None else np.asarray(dims)
    batch_size = model.hp.batch_size if batch_size is None else batch_size
    if batch_size < 1:
        raise InvalidParameter(f"'batch_size' must be >= 1. Input value: {batch_size}.")
    names = sweep_metric_names(model.cfg.n_tracks)
    offsets = np.linspace(-scale, scale, points)
    values = sigma[dims][:, None] * offsets[None, :]

    total = np.zeros((len(dims), len(names)))
    for sample, z in enumerate(latents):
        Z = np.repeat(z[None, :], len(dims) * points, axis=0)
        Z[np.arange(len(Z)), np.repeat(dims, points)] = values.reshape(-1)
        metrics = np.concatenate([
            decoded_metrics(model.decode(Z[start:start + batch_size])[0], model.cfg, ensemble)
            for start in range(0, len(Z), batch_size)
        ]).reshape(len(dims), points, len(names))
        total += pearson_rows(values, metrics)
        logger.debug(f"Sweep sample {sample + 1}/{len(latents)} done")
    return pd.DataFrame(total / len(latents), index=pd.Index(dims, name='dimension'), columns=names)
