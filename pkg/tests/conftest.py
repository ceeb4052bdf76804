import numpy as np
import pytest

from midivae.config import HOLD_VALUE
from midivae.midi.roll_codec import BarSample, RollConfig, SongRecord, StyleLabel, velocity_to_unit
from midivae.model.hyperparams import HyperParams
from midivae.model.vae import MidiVae
from midivae.nn.params import FLOAT64


def random_song(
    rng: np.random.Generator,
    cfg: RollConfig,
    n_bars: int,
    style: int = 0,
    song_id: str = 'song',
    max_program: int = None,
) -> SongRecord:
    """A record in the codec's canonical form, so decode/encode reproduces it exactly."""
    steps = n_bars * cfg.n_steps
    pitch = np.full((steps, cfg.n_tracks), cfg.silence_index, dtype=np.int64)
    velocity = np.zeros((steps, cfg.n_tracks), dtype=np.float32)
    counts = np.zeros(cfg.n_tracks, dtype=np.int64)
    for track in range(cfg.n_tracks):
        step = 0
        while step < steps:
            length = int(rng.integers(1, 5))
            if rng.random() < 0.35:
                step += length
                continue
            end = min(steps, step + length)
            pitch[step:end, track] = rng.integers(0, cfg.n_pitches)
            velocity[step, track] = velocity_to_unit(int(rng.integers(1, 128)))
            velocity[step + 1:end, track] = HOLD_VALUE
            counts[track] += 1
            step = end
    if pitch[-1, 0] == cfg.silence_index:
        pitch[-1, 0] = 0
        velocity[-1, 0] = velocity_to_unit(100)
        counts[0] += 1

    order = np.argsort(-counts, kind='stable')
    pitch = pitch[:, order]
    velocity = velocity[:, order]
    counts = counts[order]
    top = cfg.n_instruments if max_program is None else max_program
    instruments = tuple(int(rng.integers(0, top)) if count else 0 for count in counts)
    bars = [
        BarSample(
            pitch=pitch[i * cfg.n_steps:(i + 1) * cfg.n_steps].copy(),
            velocity=velocity[i * cfg.n_steps:(i + 1) * cfg.n_steps].copy(),
            bar_index=i,
            song_id=song_id,
        )
        for i in range(n_bars)
    ]
    return SongRecord(bars=bars, instruments=instruments, style=StyleLabel(style, f"style_{style}"))


@pytest.fixture
def tiny_cfg():
    return RollConfig(n_pitches=6, pitch_lo=60, pitch_hi_exclusive=66, n_steps=4, n_tracks=2, n_instruments=5)


@pytest.fixture
def tiny_hp():
    return HyperParams(
        latent_dim=6,
        gru_state=5,
        pitch_layers=2,
        other_layers=1,
        dense_layers=1,
        dense_size=7,
        batch_size=3,
        k=2,
        epochs=3,
        patience=5,
        classifier_state=4,
        classifier_layers=1,
        classifier_epochs=2,
        classifier_batch_size=8,
        seed=0,
    )


@pytest.fixture
def tiny_songs(tiny_cfg):
    rng = np.random.default_rng(11)
    return [
        random_song(rng, tiny_cfg, n_bars=int(rng.integers(1, 4)), style=index % 2, song_id=f"song_{index}")
        for index in range(6)
    ]


@pytest.fixture
def tiny_model(tiny_hp, tiny_cfg):
    return MidiVae(tiny_hp, tiny_cfg, dtype=FLOAT64)


@pytest.fixture
def tiny_model32(tiny_hp, tiny_cfg):
    return MidiVae(tiny_hp, tiny_cfg)
