import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..config import STATS_PREFIX
from ..exceptions import DegenerateStats, EmptyDataset, InvalidParameter, StyleIndexError
from ..midi.roll_codec import BarSample, SongRecord, StyleLabel
from .vae import DecoderOutput, MidiVae

logger = logging.getLogger(__name__)

# float32 resolution; anything below is a collapsed dimension
DEGENERATE_SIGMA = 1e-6
WHOLE_SONG = 'whole-song'


@dataclass(eq=False)
class LatentStats:
    """
    Per-dimension mean and standard deviation of mu_z over the training bars, plus the mean
    style-dimension values of each style (k x k, row = style).
    """
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    sample_count: int
    style_means: np.ndarray

    def __post_init__(self):
        self.mu_hat = np.asarray(self.mu_hat, dtype=np.float32)
        self.sigma_hat = np.asarray(self.sigma_hat, dtype=np.float32)
        self.style_means = np.asarray(self.style_means, dtype=np.float32)
        if self.sample_count < 2:
            raise DegenerateStats(f"Latent statistics need at least 2 encodings, got {self.sample_count}.")
        if self.mu_hat.shape != self.sigma_hat.shape:
            raise InvalidParameter(f"mu_hat {self.mu_hat.shape} and sigma_hat {self.sigma_hat.shape} differ.")
        collapsed = np.flatnonzero(~(self.sigma_hat > DEGENERATE_SIGMA))
        if collapsed.size:
            raise DegenerateStats(
                f"{collapsed.size} latent dimensions have zero spread (first: {collapsed[:8].tolist()})."
            )

    @property
    def latent_dim(self) -> int:
        return len(self.mu_hat)

    @property
    def k(self) -> int:
        return len(self.style_means)

    def to_tensors(self) -> Dict[str, np.ndarray]:
        return {
            f"{STATS_PREFIX}mu_hat": self.mu_hat,
            f"{STATS_PREFIX}sigma_hat": self.sigma_hat,
            f"{STATS_PREFIX}style_means": self.style_means,
        }

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray], sample_count: int) -> 'LatentStats':
        return cls(
            mu_hat=tensors[f"{STATS_PREFIX}mu_hat"],
            sigma_hat=tensors[f"{STATS_PREFIX}sigma_hat"],
            sample_count=int(sample_count),
            style_means=tensors[f"{STATS_PREFIX}style_means"],
        )


@dataclass(frozen=True)
class TransferSpec:
    """
    Change songs from style 'source_style' to 'target_style'.

    Parameters
    ----------------
    source_style: int
        Field is required.
    target_style: int
        Must differ from source_style.
        Field is required.
    k: int
        Number of styles.
        Field is not required. Default: 2.
    scope: str
        Field is not required. Default: 'whole-song'.
    """
    source_style: int
    target_style: int
    k: int = 2
    scope: str = WHOLE_SONG

    def __post_init__(self):
        for name in ('source_style', 'target_style'):
            if not 0 <= getattr(self, name) < self.k:
                raise StyleIndexError(f"'{name}' must lie in [0, {self.k}). Input value: {getattr(self, name)}.")
        if self.source_style == self.target_style:
            raise InvalidParameter(f"Source and target style are both {self.source_style}.")
        if self.scope != WHOLE_SONG:
            raise InvalidParameter(f"Must provide a valid 'scope' parameter. Valid options are: {[WHOLE_SONG]}")

    def reversed(self) -> 'TransferSpec':
        return TransferSpec(self.target_style, self.source_style, self.k, self.scope)


def swap_style(z: np.ndarray, i: int, j: int, k: Optional[int] = None) -> np.ndarray:
    """Copy of z with entries i and j of the last axis exchanged."""
    limit = z.shape[-1] if k is None else k
    for index in (i, j):
        if not 0 <= index < limit:
            raise StyleIndexError(f"Style index {index} outside [0, {limit}).")
    if i == j:
        raise InvalidParameter(f"Cannot swap style dimension {i} with itself.")
    out = np.array(z, copy=True)
    out[..., [i, j]] = z[..., [j, i]]
    return out


def _mix(z_a: np.ndarray, z_b: np.ndarray, alpha: float) -> np.ndarray:
    # entries equal at both ends stay bit-exact
    return np.where(z_a == z_b, z_a, (1.0 - alpha) * z_a + alpha * z_b)


def interpolate(z_a: np.ndarray, z_b: np.ndarray, steps: int) -> List[np.ndarray]:
    """'steps' evenly spaced points from z_a to z_b, endpoints included."""
    z_a = np.asarray(z_a)
    z_b = np.asarray(z_b)
    if z_a.shape != z_b.shape:
        raise InvalidParameter(f"Cannot interpolate between shapes {z_a.shape} and {z_b.shape}.")
    if steps < 2:
        raise InvalidParameter(f"'steps' must be >= 2. Input value: {steps}.")
    path = [_mix(z_a, z_b, t / (steps - 1)) for t in range(steps)]
    path[0] = z_a.copy()
    path[-1] = z_b.copy()
    return path


def majority_programs(programs: np.ndarray) -> tuple:
    """Most frequent program per track over the rows of 'programs' (bars x tracks); ties go to the lowest program."""
    programs = np.asarray(programs, dtype=np.int64)
    return tuple(int(np.argmax(np.bincount(programs[:, track]))) for track in range(programs.shape[1]))


def decode_latents(
    model: MidiVae,
    zs: np.ndarray,
    style: StyleLabel,
    song_id: str = '',
    source_path: str = '',
) -> SongRecord:
    """Decodes a latent progression (bars x latent_dim) bar by bar with decoder carryover."""
    zs = np.asarray(zs)
    if zs.ndim != 2 or len(zs) == 0:
        raise InvalidParameter(f"Expected a non-empty (bars, latent_dim) array, got shape {zs.shape}.")
    output = model.decode_sequences([zs])[0]
    return _record(model, output, style, song_id, source_path)


def _record(model: MidiVae, output: DecoderOutput, style: StyleLabel, song_id: str, source_path: str = '') -> SongRecord:
    return SongRecord(
        bars=output.to_bars(model.cfg, song_id=song_id),
        instruments=majority_programs(output.programs()),
        style=style,
        source_path=source_path,
    )


def song_latents(song: SongRecord, model: MidiVae) -> np.ndarray:
    if len(song) == 0:
        raise EmptyDataset(f"Song '{song.song_id}' has no bars.")
    return model.encode_songs([song])[0]


def autoencode_song(song: SongRecord, model: MidiVae) -> SongRecord:
    """Encodes mu_z with carryover and decodes it with carryover; no sampling."""
    return decode_latents(model, song_latents(song, model), song.style, song.song_id, song.source_path)


def transfer_song(
    song: SongRecord,
    spec: Union[TransferSpec, Sequence[TransferSpec]],
    model: MidiVae,
    style_names: Optional[Sequence[str]] = None,
) -> SongRecord:
    """
    Swaps the source and target style dimensions of every bar's mu_z and decodes the result.
    A list of specs is applied in order to the same latents before decoding, so a transfer
    followed by its reversal decodes exactly like autoencode_song. The input song is left
    untouched.
    """
    specs = [spec] if isinstance(spec, TransferSpec) else list(spec)
    if not specs:
        raise InvalidParameter("transfer_song needs at least one TransferSpec.")
    latents = song_latents(song, model)
    for step in specs:
        if step.k != model.hp.k:
            raise StyleIndexError(f"Transfer is defined over {step.k} styles, the model has {model.hp.k}.")
        latents = swap_style(latents, step.source_style, step.target_style, model.hp.k)
    target = specs[-1].target_style
    name = style_names[target] if style_names else f"style_{target}"
    return decode_latents(model, latents, StyleLabel(target, name), song.song_id, song.source_path)


def _renumber(bars: Sequence[BarSample], song_id: str, first_index: int) -> List[BarSample]:
    return [
        BarSample(pitch=bar.pitch.copy(), velocity=bar.velocity.copy(), bar_index=first_index + i, song_id=song_id)
        for i, bar in enumerate(bars)
    ]


def medley(song_a: SongRecord, song_b: SongRecord, bridge_bars: int, model: MidiVae) -> SongRecord:
    """
    A's bars, then 'bridge_bars' bars decoded along the line from A's last latent to B's first
    latent, then B's bars. Each bridge bar is decoded from a fresh decoder state; a single
    bridge bar is the midpoint.
    """
    if bridge_bars < 1:
        raise InvalidParameter(f"'bridge_bars' must be >= 1. Input value: {bridge_bars}.")
    z_a = song_latents(song_a, model)[-1]
    z_b = song_latents(song_b, model)[0]
    path = interpolate(z_a, z_b, bridge_bars) if bridge_bars >= 2 else [interpolate(z_a, z_b, 3)[1]]
    # one decode per bar keeps each bridge bar identical to decode_latents of its latent
    output = DecoderOutput.concatenate([model.decode(z[None])[0] for z in path])

    song_id = f"{song_a.song_id}+{song_b.song_id}"
    bridge = output.to_bars(model.cfg, song_id=song_id, first_index=len(song_a))
    bars = (
        _renumber(song_a.bars, song_id, 0)
        + bridge
        + _renumber(song_b.bars, song_id, len(song_a) + bridge_bars)
    )
    votes = np.concatenate([
        np.tile(np.asarray(song_a.instruments), (len(song_a), 1)),
        output.programs(),
        np.tile(np.asarray(song_b.instruments), (len(song_b), 1)),
    ])
    return SongRecord(bars=bars, instruments=majority_programs(votes), style=song_a.style)


def mixture(song_a: SongRecord, song_b: SongRecord, alpha: float, model: MidiVae) -> SongRecord:
    """Bar-wise (1 - alpha) z_a + alpha z_b up to the shorter song, decoded with carryover."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"'alpha' must lie in [0, 1]. Input value: {alpha}.")
    z_a = song_latents(song_a, model)
    z_b = song_latents(song_b, model)
    n = min(len(z_a), len(z_b))
    zs = _mix(z_a[:n], z_b[:n], alpha)
    style = song_a.style if alpha <= 0.5 else song_b.style
    return decode_latents(model, zs, style, f"{song_a.song_id}*{song_b.song_id}")


def empirical_latent_stats(songs: Sequence[SongRecord], model: MidiVae) -> LatentStats:
    """Mean and spread of mu_z over every bar of 'songs', encoded with carryover."""
    if not songs:
        raise DegenerateStats("No songs to compute latent statistics from.")
    latents = model.encode_songs(songs)
    Z = np.concatenate(latents).astype(np.float64)
    styles = np.concatenate([np.full(len(song), song.style.index) for song in songs])
    k = model.hp.k
    style_means = np.zeros((k, k))
    for style in range(k):
        rows = Z[styles == style]
        if len(rows):
            style_means[style] = rows[:, :k].mean(axis=0)
        else:
            logger.warning(f"No bars of style {style}; its style means stay 0.")
    return LatentStats(
        mu_hat=Z.mean(axis=0),
        sigma_hat=Z.std(axis=0),
        sample_count=len(Z),
        style_means=style_means,
    )


def sample_prior(stats: LatentStats, rng: np.random.Generator, style: Optional[int] = None) -> np.ndarray:
    """z ~ N(0, diag(sigma_hat^2)); with 'style', z[:k] is set to that style's mean style values."""
    z = (rng.standard_normal(stats.latent_dim) * stats.sigma_hat).astype(np.float32)
    if style is not None:
        if not 0 <= style < stats.k:
            raise StyleIndexError(f"Style {style} outside [0, {stats.k}).")
        z[:stats.k] = stats.style_means[style]
    return z


def generate_song(
    model: MidiVae,
    stats: LatentStats,
    n_bars: int,
    rng: np.random.Generator,
    style: Optional[int] = None,
    style_names: Optional[Sequence[str]] = None,
) -> SongRecord:
    """Samples n_bars latents from the prior and decodes them as one song."""
    if n_bars < 1:
        raise InvalidParameter(f"'n_bars' must be >= 1. Input value: {n_bars}.")
    zs = np.stack([sample_prior(stats, rng, style) for _ in range(n_bars)])
    index = style if style is not None else int(np.argmax(model.classify_style(zs).mean(axis=0)))
    name = style_names[index] if style_names else f"style_{index}"
    return decode_latents(model, zs, StyleLabel(index, name), song_id='generated')
