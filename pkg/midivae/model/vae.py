import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..config import INSTRUMENT, PITCH, VELOCITY
from ..exceptions import EmptyDataset, ShapeMismatch
from ..midi.roll_codec import BarSample, RollConfig, SongRecord
from ..nn.functional import (
    kl_from_logvar,
    kl_from_logvar_backward,
    mse,
    mse_backward,
    reparameterize,
    reparameterize_backward,
    softmax,
    softmax_cross_entropy,
)
from ..nn.layers import LINEAR, SIGMOID, TANH, Dense, GRUStack
from ..nn.params import FLOAT32, ParamStore
from .hyperparams import HyperParams

logger = logging.getLogger(__name__)

FEATURES = [PITCH, VELOCITY, INSTRUMENT]


@dataclass(eq=False)
class BarBatch:
    """
    B bars stacked for one forward pass: pitch symbols and velocities (B x n_steps x n_tracks),
    the song's programs (B x n_tracks) and style indices (B,).
    """
    pitch: np.ndarray
    velocity: np.ndarray
    instruments: np.ndarray
    style: np.ndarray

    def __len__(self):
        return len(self.pitch)

    @classmethod
    def from_bars(cls, bars: Sequence[BarSample], instruments: Sequence[Sequence[int]], styles: Sequence[int]) -> 'BarBatch':
        return cls(
            pitch=np.stack([bar.pitch for bar in bars]).astype(np.int64),
            velocity=np.stack([bar.velocity for bar in bars]).astype(np.float32),
            instruments=np.asarray(instruments, dtype=np.int64).reshape(len(bars), -1),
            style=np.asarray(styles, dtype=np.int64).reshape(len(bars)),
        )

    @classmethod
    def from_song_bars(cls, songs: Sequence[SongRecord], bar_indices: Sequence[int]) -> 'BarBatch':
        """Bar bar_indices[i] of songs[i] for every i."""
        return cls.from_bars(
            [song.bars[index] for song, index in zip(songs, bar_indices)],
            [song.instruments for song in songs],
            [song.style.index for song in songs],
        )


def feature_input(batch: BarBatch, cfg: RollConfig, feature: str, dtype=FLOAT32) -> np.ndarray:
    """
    Recurrent input of one feature: pitch 1-hots or velocities per frame, each followed by the
    frame's track 1-hot (B x frames x ...), or the program 1-hots per track (B x n_tracks x n_instruments).
    """
    n = len(batch)
    if batch.pitch.shape[1:] != (cfg.n_steps, cfg.n_tracks) or batch.instruments.shape != (n, cfg.n_tracks):
        raise ShapeMismatch(
            f"Batch rolls must be (B, {cfg.n_steps}, {cfg.n_tracks}) with (B, {cfg.n_tracks}) programs; "
            f"got {batch.pitch.shape} and {batch.instruments.shape}."
        )
    if feature == INSTRUMENT:
        return np.eye(cfg.n_instruments, dtype=dtype)[batch.instruments]
    frame_tracks = np.eye(cfg.n_tracks, dtype=dtype)[np.arange(cfg.frames_per_bar) % cfg.n_tracks]
    tracks = np.broadcast_to(frame_tracks, (n,) + frame_tracks.shape)
    if feature == PITCH:
        values = np.eye(cfg.vocab_size, dtype=dtype)[batch.pitch.reshape(n, cfg.frames_per_bar)]
    else:
        values = batch.velocity.reshape(n, cfg.frames_per_bar, 1).astype(dtype)
    return np.concatenate([values, tracks], axis=-1)


@dataclass(eq=False)
class CarryState:
    """
    Per-layer GRU states handed from one bar to the next bar of the same song, for every
    encoder and decoder. Each entry is (B x state).
    """
    encoder: Dict[str, List[np.ndarray]]
    decoder: Dict[str, List[np.ndarray]]

    @classmethod
    def fresh(cls, layers: Dict[str, int], n_hidden: int, batch: int, dtype=FLOAT32) -> 'CarryState':
        def zeros():
            return {feature: [np.zeros((batch, n_hidden), dtype=dtype) for _ in range(count)] for feature, count in layers.items()}
        return cls(encoder=zeros(), decoder=zeros())

    @property
    def batch_size(self) -> int:
        return len(next(iter(self.encoder.values()))[0])

    def _map(self, fn) -> 'CarryState':
        return CarryState(
            encoder={feature: [fn(h) for h in states] for feature, states in self.encoder.items()},
            decoder={feature: [fn(h) for h in states] for feature, states in self.decoder.items()},
        )

    def take(self, rows) -> 'CarryState':
        return self._map(lambda h: h[rows].copy())

    def copy(self) -> 'CarryState':
        return self._map(np.copy)

    def put(self, rows, other: 'CarryState'):
        for part, other_part in ((self.encoder, other.encoder), (self.decoder, other.decoder)):
            for feature, states in part.items():
                for h, h_other in zip(states, other_part[feature]):
                    h[rows] = h_other

    def reset(self, rows):
        for part in (self.encoder, self.decoder):
            for states in part.values():
                for h in states:
                    h[rows] = 0.0


@dataclass(frozen=True)
class LossBreakdown:
    pitch_ce: float
    instrument_ce: float
    velocity_mse: float
    style_ce: float
    kl: float
    total: float

    @classmethod
    def combine(cls, hp: HyperParams, pitch_ce, instrument_ce, velocity_mse, style_ce, kl) -> 'LossBreakdown':
        total = (
            hp.lambda_p * pitch_ce
            + hp.lambda_i * instrument_ce
            + hp.lambda_v * velocity_mse
            + hp.lambda_s * style_ce
            + hp.beta * kl
        )
        return cls(pitch_ce, instrument_ce, velocity_mse, style_ce, kl, total)

    def to_dict(self) -> dict:
        return {
            'pitch_ce': self.pitch_ce,
            'instrument_ce': self.instrument_ce,
            'velocity_mse': self.velocity_mse,
            'style_ce': self.style_ce,
            'kl': self.kl,
            'total': self.total,
        }


@dataclass(eq=False)
class DecoderOutput:
    """
    Decoder predictions for B bars: pitch distributions per frame (B x frames x vocab),
    velocities per frame (B x frames) and program distributions per track
    (B x n_tracks x n_instruments).
    """
    pitch_probs: np.ndarray
    velocity: np.ndarray
    instrument_probs: np.ndarray

    def __len__(self):
        return len(self.pitch_probs)

    def pitch_symbols(self, cfg: RollConfig) -> np.ndarray:
        return np.argmax(self.pitch_probs, axis=-1).reshape(-1, cfg.n_steps, cfg.n_tracks)

    def velocity_roll(self, cfg: RollConfig) -> np.ndarray:
        return self.velocity.reshape(-1, cfg.n_steps, cfg.n_tracks).astype(np.float32)

    def programs(self) -> np.ndarray:
        return np.argmax(self.instrument_probs, axis=-1)

    def to_bars(self, cfg: RollConfig, song_id: str = '', first_index: int = 0) -> List[BarSample]:
        pitch = self.pitch_symbols(cfg)
        velocity = self.velocity_roll(cfg)
        return [
            BarSample(pitch=pitch[i].astype(np.int64), velocity=velocity[i], bar_index=first_index + i, song_id=song_id)
            for i in range(len(pitch))
        ]

    @classmethod
    def concatenate(cls, outputs: Sequence['DecoderOutput']) -> 'DecoderOutput':
        return cls(
            pitch_probs=np.concatenate([o.pitch_probs for o in outputs]),
            velocity=np.concatenate([o.velocity for o in outputs]),
            instrument_probs=np.concatenate([o.instrument_probs for o in outputs]),
        )


@dataclass(eq=False)
class StepResult:
    losses: LossBreakdown
    grads: Dict[str, np.ndarray]
    carry: CarryState
    output: DecoderOutput
    z: np.ndarray


class MidiVae:
    """
    Three GRU encoder/decoder pairs (pitch, velocity, instrument) sharing one latent space,
    with a parameter-free softmax style head on the first k latent dimensions.

    * Main use case:

    >>> model = MidiVae(HyperParams(), RollConfig())
    >>> carry = model.fresh_state(batch=len(batch))
    >>> result = model.forward_backward(batch, carry, rng)
    >>> adam_step(model.store, result.grads, lr=model.hp.lr)

    Parameters
    ----------------
    hp: HyperParams
        Field is required.
    cfg: RollConfig
        Field is required.
    dtype:
        np.float32 for training, np.float64 for gradient checks.
        Field is not required. Default: np.float32.
    rng: np.random.Generator
        Weight initialization randomness.
        Field is not required. Default: np.random.default_rng(hp.seed).
    """

    def __init__(self, hp: HyperParams, cfg: RollConfig, dtype=FLOAT32, rng: Optional[np.random.Generator] = None):
        self.hp = hp
        self.cfg = cfg
        self.store = ParamStore(dtype=dtype)
        rng = rng if rng is not None else np.random.default_rng(hp.seed)
        H = hp.gru_state
        self.layers = {PITCH: hp.pitch_layers, VELOCITY: hp.other_layers, INSTRUMENT: hp.other_layers}

        encoder_inputs = {
            PITCH: cfg.vocab_size + cfg.n_tracks,
            VELOCITY: 1 + cfg.n_tracks,
            INSTRUMENT: cfg.n_instruments,
        }
        self.encoders = {
            feature: GRUStack(self.store, f"encoder.{feature}", encoder_inputs[feature], H, self.layers[feature], rng)
            for feature in FEATURES
        }

        self.trunk: List[Dense] = []
        width = 3 * H
        for index in range(hp.dense_layers):
            self.trunk.append(Dense(self.store, f"trunk.{index}", width, hp.dense_size, rng, TANH))
            width = hp.dense_size
        self.mu_head = Dense(self.store, 'latent.mu', width, hp.latent_dim, rng, LINEAR)
        self.logvar_head = Dense(self.store, 'latent.logvar', width, hp.latent_dim, rng, LINEAR)

        self.projections = {
            feature: Dense(self.store, f"projection.{feature}", hp.latent_dim + self.layers[feature] * H,
                           self.layers[feature] * H, rng, TANH)
            for feature in FEATURES
        }
        positional = cfg.n_steps + cfg.n_tracks
        decoder_inputs = {PITCH: positional, VELOCITY: positional, INSTRUMENT: cfg.n_tracks}
        self.decoders = {
            feature: GRUStack(self.store, f"decoder.{feature}", decoder_inputs[feature], H, self.layers[feature], rng)
            for feature in FEATURES
        }
        self.heads = {
            PITCH: Dense(self.store, 'head.pitch', H, cfg.vocab_size, rng, LINEAR),
            VELOCITY: Dense(self.store, 'head.velocity', H, 1, rng, SIGMOID),
            INSTRUMENT: Dense(self.store, 'head.instrument', H, cfg.n_instruments, rng, LINEAR),
        }

        dt = self.store.dtype
        frames = np.arange(cfg.frames_per_bar)
        self._positions = {
            PITCH: np.concatenate([
                np.eye(cfg.n_steps, dtype=dt)[frames // cfg.n_tracks],
                np.eye(cfg.n_tracks, dtype=dt)[frames % cfg.n_tracks],
            ], axis=1),
            INSTRUMENT: np.eye(cfg.n_tracks, dtype=dt),
        }
        self._positions[VELOCITY] = self._positions[PITCH]

    @property
    def dtype(self):
        return self.store.dtype

    @property
    def n_parameters(self) -> int:
        return self.store.n_parameters

    def fresh_state(self, batch: int) -> CarryState:
        return CarryState.fresh(self.layers, self.hp.gru_state, batch, self.dtype)

    # Encoder

    def _encode(self, batch: BarBatch, carry: CarryState):
        inputs = {feature: feature_input(batch, self.cfg, feature, self.dtype) for feature in FEATURES}
        caches = {}
        finals = {}
        for feature in FEATURES:
            _, finals[feature], caches[feature] = self.encoders[feature].forward(inputs[feature], carry.encoder[feature])
        x = np.concatenate([finals[feature][-1] for feature in FEATURES], axis=-1)
        trunk_caches = []
        for layer in self.trunk:
            x, cache = layer.forward(x)
            trunk_caches.append(cache)
        mu, mu_cache = self.mu_head.forward(x)
        logvar, logvar_cache = self.logvar_head.forward(x)
        new_encoder = {feature: [h.copy() for h in finals[feature]] for feature in FEATURES}
        return mu, logvar, new_encoder, (caches, trunk_caches, mu_cache, logvar_cache)

    def encode(self, batch: BarBatch, carry: Optional[CarryState] = None):
        """
        Returns (mu_z, sigma_z, carry) where the carry holds the encoder states after this bar
        and the untouched decoder states.
        """
        carry = carry if carry is not None else self.fresh_state(len(batch))
        mu, logvar, new_encoder, _ = self._encode(batch, carry)
        return mu, np.exp(0.5 * logvar), CarryState(encoder=new_encoder, decoder=carry.decoder)

    # Decoder

    def _decode(self, z: np.ndarray, carry: CarryState):
        H = self.hp.gru_state
        n = len(z)
        caches = {}
        outputs = {}
        new_decoder = {}
        for feature in FEATURES:
            init = np.concatenate([z] + list(carry.decoder[feature]), axis=-1)
            h0, projection_cache = self.projections[feature].forward(init)
            h0s = [h0[:, index * H:(index + 1) * H] for index in range(self.layers[feature])]
            positions = self._positions[feature]
            X = np.broadcast_to(positions, (n,) + positions.shape)
            top, finals, stack_caches = self.decoders[feature].forward(X, h0s)
            out, head_cache = self.heads[feature].forward(top)
            outputs[feature] = out
            new_decoder[feature] = [h.copy() for h in finals]
            caches[feature] = (projection_cache, stack_caches, head_cache)
        return outputs, new_decoder, caches

    def decode(self, z: np.ndarray, carry: Optional[CarryState] = None):
        """
        Returns (DecoderOutput, carry) where the carry holds the decoder states after this bar.
        No sampling happens here.
        """
        if z.ndim != 2 or z.shape[1] != self.hp.latent_dim:
            raise ShapeMismatch(f"z must be (B, {self.hp.latent_dim}); got {z.shape}.")
        carry = carry if carry is not None else self.fresh_state(len(z))
        outputs, new_decoder, _ = self._decode(np.asarray(z, dtype=self.dtype), carry)
        return self._output(outputs), CarryState(encoder=carry.encoder, decoder=new_decoder)

    def _output(self, outputs: Dict[str, np.ndarray]) -> DecoderOutput:
        return DecoderOutput(
            pitch_probs=softmax(outputs[PITCH]),
            velocity=outputs[VELOCITY][..., 0],
            instrument_probs=softmax(outputs[INSTRUMENT]),
        )

    def classify_style(self, z: np.ndarray) -> np.ndarray:
        return softmax(np.asarray(z)[..., :self.hp.k])

    # Loss

    def _forward(self, batch: BarBatch, carry: CarryState, rng: np.random.Generator):
        hp = self.hp
        mu, logvar, new_encoder, encoder_caches = self._encode(batch, carry)
        sigma = np.exp(0.5 * logvar)
        z, eps = reparameterize(mu, sigma, rng, hp.sigma_eps)
        outputs, new_decoder, decoder_caches = self._decode(z, carry)

        n = len(batch)
        pitch_ce, _, dpitch = softmax_cross_entropy(outputs[PITCH], batch.pitch.reshape(n, -1))
        instrument_ce, _, dinstrument = softmax_cross_entropy(outputs[INSTRUMENT], batch.instruments)
        velocity_target = batch.velocity.reshape(n, -1).astype(self.dtype)
        velocity_pred = outputs[VELOCITY][..., 0]
        velocity_mse = mse(velocity_pred, velocity_target)
        style_ce, _, dstyle = softmax_cross_entropy(z[:, :hp.k], batch.style)
        kl = float(np.mean(kl_from_logvar(mu, logvar)))
        losses = LossBreakdown.combine(hp, pitch_ce, instrument_ce, velocity_mse, style_ce, kl)

        state = {
            'mu': mu, 'logvar': logvar, 'sigma': sigma, 'z': z, 'eps': eps,
            'dpitch': dpitch, 'dinstrument': dinstrument, 'dstyle': dstyle,
            'dvelocity': mse_backward(velocity_pred, velocity_target),
            'encoder_caches': encoder_caches, 'decoder_caches': decoder_caches,
        }
        return losses, outputs, CarryState(encoder=new_encoder, decoder=new_decoder), state

    def forward(self, batch: BarBatch, carry: Optional[CarryState] = None, rng: Optional[np.random.Generator] = None) -> StepResult:
        """Same as forward_backward without gradients (grads is empty)."""
        if len(batch) == 0:
            raise EmptyDataset("Cannot compute the loss of an empty batch.")
        carry = carry if carry is not None else self.fresh_state(len(batch))
        rng = rng if rng is not None else np.random.default_rng(self.hp.seed)
        losses, outputs, new_carry, state = self._forward(batch, carry, rng)
        return StepResult(losses=losses, grads={}, carry=new_carry, output=self._output(outputs), z=state['z'])

    def loss(self, batch: BarBatch, carry: Optional[CarryState] = None, rng: Optional[np.random.Generator] = None) -> LossBreakdown:
        return self.forward(batch, carry, rng).losses

    def forward_backward(self, batch: BarBatch, carry: Optional[CarryState] = None, rng: Optional[np.random.Generator] = None) -> StepResult:
        """
        Loss and gradients for one batch. Carried states enter as constants; the returned
        carry holds the states after this bar.
        """
        if len(batch) == 0:
            raise EmptyDataset("Cannot compute the loss of an empty batch.")
        carry = carry if carry is not None else self.fresh_state(len(batch))
        rng = rng if rng is not None else np.random.default_rng(self.hp.seed)
        hp = self.hp
        H = hp.gru_state
        losses, outputs, new_carry, state = self._forward(batch, carry, rng)
        grads = self.store.zeros_like()

        weighted = {
            PITCH: hp.lambda_p * state['dpitch'],
            VELOCITY: hp.lambda_v * state['dvelocity'][..., None],
            INSTRUMENT: hp.lambda_i * state['dinstrument'],
        }
        dz = np.zeros_like(state['z'])
        dz[:, :hp.k] += hp.lambda_s * state['dstyle']
        for feature in FEATURES:
            projection_cache, stack_caches, head_cache = state['decoder_caches'][feature]
            dtop = self.heads[feature].backward(weighted[feature], head_cache, grads)
            _, dh0s = self.decoders[feature].backward(dtop, stack_caches, grads)
            dinit = self.projections[feature].backward(np.concatenate(dh0s, axis=-1), projection_cache, grads)
            dz += dinit[:, :hp.latent_dim]

        n = len(batch)
        dmu, dsigma = reparameterize_backward(dz, state['eps'])
        dlogvar = dsigma * 0.5 * state['sigma']
        kl_dmu, kl_dlogvar = kl_from_logvar_backward(state['mu'], state['logvar'])
        dmu = dmu + (hp.beta / n) * kl_dmu
        dlogvar = dlogvar + (hp.beta / n) * kl_dlogvar

        encoder_caches, trunk_caches, mu_cache, logvar_cache = state['encoder_caches']
        dx = self.mu_head.backward(dmu, mu_cache, grads) + self.logvar_head.backward(dlogvar, logvar_cache, grads)
        for layer, cache in zip(reversed(self.trunk), reversed(trunk_caches)):
            dx = layer.backward(dx, cache, grads)
        for index, feature in enumerate(FEATURES):
            dfinals = [None] * self.layers[feature]
            dfinals[-1] = dx[:, index * H:(index + 1) * H]
            self.encoders[feature].backward(None, encoder_caches[feature], grads, dfinals)

        return StepResult(losses=losses, grads=grads, carry=new_carry, output=self._output(outputs), z=state['z'])

    # Whole songs

    def encode_songs(self, songs: Sequence[SongRecord]) -> List[np.ndarray]:
        """mu_z of every bar, encoded song by song with state carryover; songs run as parallel lanes."""
        latents = [np.zeros((len(song), self.hp.latent_dim), dtype=self.dtype) for song in songs]
        carry = self.fresh_state(len(songs))
        for t in range(max((len(song) for song in songs), default=0)):
            rows = np.array([i for i, song in enumerate(songs) if len(song) > t])
            batch = BarBatch.from_song_bars([songs[i] for i in rows], [t] * len(rows))
            mu, _, lane_carry = self.encode(batch, carry.take(rows))
            carry.put(rows, lane_carry)
            for row, value in zip(rows, mu):
                latents[row][t] = value
        return latents

    def decode_sequences(self, latents: Sequence[np.ndarray]) -> List[DecoderOutput]:
        """Decodes each latent progression from a fresh decoder state, carrying it bar to bar."""
        per_sequence: List[List[DecoderOutput]] = [[] for _ in latents]
        carry = self.fresh_state(len(latents))
        for t in range(max((len(z) for z in latents), default=0)):
            rows = np.array([i for i, z in enumerate(latents) if len(z) > t])
            z = np.stack([latents[i][t] for i in rows]).astype(self.dtype)
            output, lane_carry = self.decode(z, carry.take(rows))
            carry.put(rows, lane_carry)
            for position, row in enumerate(rows):
                per_sequence[row].append(DecoderOutput(
                    pitch_probs=output.pitch_probs[position:position + 1],
                    velocity=output.velocity[position:position + 1],
                    instrument_probs=output.instrument_probs[position:position + 1],
                ))
        return [DecoderOutput.concatenate(parts) for parts in per_sequence]

    def reconstruction_metrics(self, songs: Sequence[SongRecord]) -> Dict[str, float]:
        """
        Pitch, instrument and style accuracy plus velocity MSE of whole-song reconstructions,
        encoding mu_z with carryover and decoding without sampling.
        """
        if not songs:
            raise EmptyDataset("No songs to evaluate.")
        cfg = self.cfg
        latents = self.encode_songs(songs)
        outputs = self.decode_sequences(latents)
        pitch_hits = frames = 0
        instrument_hits = tracks = 0
        style_hits = bars = 0
        squared_error = 0.0
        for song, z, output in zip(songs, latents, outputs):
            target_pitch = np.stack([bar.pitch for bar in song.bars])
            target_velocity = np.stack([bar.velocity for bar in song.bars]).astype(np.float64)
            pitch_hits += int(np.sum(output.pitch_symbols(cfg) == target_pitch))
            frames += target_pitch.size
            instrument_hits += int(np.sum(output.programs() == np.asarray(song.instruments)[None, :]))
            tracks += len(song) * cfg.n_tracks
            style_hits += int(np.sum(np.argmax(self.classify_style(z), axis=-1) == song.style.index))
            bars += len(song)
            squared_error += float(np.sum((output.velocity_roll(cfg).astype(np.float64) - target_velocity) ** 2))
        return {
            'pitch_acc': pitch_hits / frames,
            'instrument_acc': instrument_hits / tracks,
            'style_acc': style_hits / bars,
            'velocity_mse': squared_error / frames,
        }

    # Persistence helpers

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.store.items()}

    def load_tensors(self, tensors: Dict[str, np.ndarray]):
        self.store.load(tensors, strict=True)
