import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import (
    DEFAULT_TEMPO_BPM,
    DEFAULT_TICKS_PER_QUARTER,
    DEFAULT_VELOCITY,
    DRUM_CHANNEL,
    HOLD_VALUE,
    N_INSTRUMENTS,
    N_TRACKS,
    ONSET_THRESHOLD,
    PITCH_HI_EXCLUSIVE,
    PITCH_LO,
    SILENT_VALUE,
    STEPS_PER_BAR,
    STEPS_PER_QUARTER,
)
from ..exceptions import DatasetSplitError, InvalidParameter, InvalidRoll, NoPlayableTracks
from .midi_io import MidiDocument, MidiTrack, NoteEvent


@dataclass(frozen=True)
class RollConfig:
    """
    Sizes of the pitch/velocity/instrument rolls.

    Parameters
    ----------------
    n_pitches: int
        Pitch vocabulary size without the silence symbol. Default: 60.
    pitch_lo: int
        Lowest MIDI pitch kept. Default: 24.
    pitch_hi_exclusive: int
        Upper pitch bound, exclusive. Default: 84.
    n_steps: int
        16th-note steps per bar. Default: 16.
    n_tracks: int
        Voices per song. Default: 4.
    n_instruments: int
        Instrument vocabulary (General MIDI programs). Default: 128.
    """
    n_pitches: int = PITCH_HI_EXCLUSIVE - PITCH_LO
    pitch_lo: int = PITCH_LO
    pitch_hi_exclusive: int = PITCH_HI_EXCLUSIVE
    n_steps: int = STEPS_PER_BAR
    n_tracks: int = N_TRACKS
    n_instruments: int = N_INSTRUMENTS

    def __post_init__(self):
        for name in ('n_pitches', 'n_steps', 'n_tracks', 'n_instruments'):
            if getattr(self, name) <= 0:
                raise InvalidParameter(f"'{name}' must be positive. Input value: {getattr(self, name)}.")
        if self.pitch_hi_exclusive - self.pitch_lo != self.n_pitches:
            raise InvalidParameter(
                f"pitch_hi_exclusive - pitch_lo must equal n_pitches. "
                f"Input values: {self.pitch_lo}, {self.pitch_hi_exclusive}, {self.n_pitches}."
            )

    @property
    def silence_index(self) -> int:
        return self.n_pitches

    @property
    def vocab_size(self) -> int:
        return self.n_pitches + 1

    @property
    def frames_per_bar(self) -> int:
        return self.n_steps * self.n_tracks


@dataclass(frozen=True)
class StyleLabel:
    index: int
    name: str


@dataclass(eq=False)
class BarSample:
    """
    One bar: 'pitch' holds symbol indices (n_steps x n_tracks, silence = n_pitches),
    'velocity' the matching velocity roll in [0, 1].
    """
    pitch: np.ndarray
    velocity: np.ndarray
    bar_index: int = 0
    song_id: str = ''

    def __eq__(self, other):
        if not isinstance(other, BarSample):
            return NotImplemented
        return (
            self.bar_index == other.bar_index
            and self.song_id == other.song_id
            and np.array_equal(self.pitch, other.pitch)
            and np.array_equal(self.velocity, other.velocity)
        )

    __hash__ = None

    def validate(self, cfg: RollConfig):
        if self.pitch.shape != (cfg.n_steps, cfg.n_tracks) or self.velocity.shape != self.pitch.shape:
            raise InvalidRoll(f"Bar {self.bar_index}: rolls must have shape {(cfg.n_steps, cfg.n_tracks)}.")
        if self.pitch.min() < 0 or self.pitch.max() > cfg.silence_index:
            raise InvalidRoll(f"Bar {self.bar_index}: pitch symbols must lie in [0, {cfg.silence_index}].")
        if self.velocity.min() < 0.0 or self.velocity.max() > 1.0:
            raise InvalidRoll(f"Bar {self.bar_index}: velocities must lie in [0, 1].")
        if np.any((self.velocity > ONSET_THRESHOLD) & (self.pitch == cfg.silence_index)):
            raise InvalidRoll(f"Bar {self.bar_index}: onset velocity on a silent cell.")


@dataclass(eq=False)
class SongRecord:
    """
    Ordered bars of one song plus its global instrument assignment and style.

    The codec is a bijection on records where every note run starts with an onset value,
    continuation cells hold 0.25, silent cells hold 0.0, voices are ordered by
    non-increasing note count, empty voices use program 0 and the last bar holds a note.
    Note velocities lie in 1..127: velocity code 0 is not a note-on, so decoding maps it to 1.
    """
    bars: List[BarSample]
    instruments: Tuple[int, ...]
    style: StyleLabel
    source_path: str = ''

    @property
    def song_id(self) -> str:
        return self.bars[0].song_id if self.bars else ''

    def __len__(self):
        return len(self.bars)

    def pitch_roll(self) -> np.ndarray:
        return np.concatenate([bar.pitch for bar in self.bars], axis=0)

    def velocity_roll(self) -> np.ndarray:
        return np.concatenate([bar.velocity for bar in self.bars], axis=0)

    def same_rolls(self, other: 'SongRecord') -> bool:
        return (
            len(self.bars) == len(other.bars)
            and tuple(self.instruments) == tuple(other.instruments)
            and np.array_equal(self.pitch_roll(), other.pitch_roll())
            and np.array_equal(self.velocity_roll(), other.velocity_roll())
        )

    def validate(self, cfg: RollConfig):
        if len(self.instruments) != cfg.n_tracks:
            raise InvalidRoll(f"Song '{self.song_id}': expected {cfg.n_tracks} instruments, got {len(self.instruments)}.")
        if any(not 0 <= program < cfg.n_instruments for program in self.instruments):
            raise InvalidRoll(f"Song '{self.song_id}': programs must lie in [0, {cfg.n_instruments}).")
        for expected, bar in enumerate(self.bars):
            if bar.bar_index != expected:
                raise InvalidRoll(f"Song '{self.song_id}': bars must be ordered without gaps.")
            bar.validate(cfg)


@dataclass
class Voice:
    program: int
    notes: List[NoteEvent] = field(default_factory=list)


@dataclass(eq=False)
class StepSequence:
    """Quantized monophonic voice: pitch (-1 when silent), MIDI velocity and onset flag per step."""
    pitch: np.ndarray
    velocity: np.ndarray
    onset: np.ndarray

    def __len__(self):
        return len(self.pitch)


@dataclass(eq=False)
class FrameSequence:
    """Unrolled bar, step-major and track-minor."""
    pitch: np.ndarray
    velocity: np.ndarray
    track: np.ndarray

    def __len__(self):
        return len(self.track)


# Voice selection

def _voice_layers(events: Sequence[NoteEvent]) -> List[List[NoteEvent]]:
    """Splits a polyphonic note list into monophonic layers, highest sounding note first."""
    events = sorted(events, key=lambda e: (e.onset_ticks, -e.pitch))
    bounds = sorted({e.onset_ticks for e in events} | {e.offset_ticks for e in events})
    layers: List[List[NoteEvent]] = []
    open_pieces: List[Optional[Tuple[int, int]]] = []
    active: List[int] = []
    next_event = 0

    def close(layer: int, tick: int):
        piece = open_pieces[layer]
        if piece is None:
            return
        index, start = piece
        source = events[index]
        layers[layer].append(replace(source, onset_ticks=start, duration_ticks=tick - start))
        open_pieces[layer] = None

    for seg_start in bounds:
        active = [i for i in active if events[i].offset_ticks > seg_start]
        while next_event < len(events) and events[next_event].onset_ticks == seg_start:
            active.append(next_event)
            next_event += 1
        sounding = sorted(active, key=lambda i: (-events[i].pitch, events[i].onset_ticks, i))
        while len(layers) < len(sounding):
            layers.append([])
            open_pieces.append(None)
        for layer in range(len(layers)):
            current = sounding[layer] if layer < len(sounding) else None
            piece = open_pieces[layer]
            if piece is not None and piece[0] == current:
                continue
            close(layer, seg_start)
            if current is not None:
                open_pieces[layer] = (current, seg_start)
    return layers


def select_voices(doc: MidiDocument, cfg: RollConfig) -> List[Voice]:
    """
    Picks cfg.n_tracks monophonic voices: the highest voice of the tracks with the most
    notes, then lower voices of the chosen tracks, then empty voices.
    """
    candidates = [track for track in doc.tracks if not track.is_drum and track.events]
    if not candidates:
        raise NoPlayableTracks("Every track is a drum track or empty.")

    chosen = sorted(candidates, key=lambda track: -len(track.events))[:cfg.n_tracks]
    layers = [_voice_layers(track.events) for track in chosen]
    voices = [Voice(track.program, track_layers[0]) for track, track_layers in zip(chosen, layers)]

    depth = 1
    while len(voices) < cfg.n_tracks and any(len(track_layers) > depth for track_layers in layers):
        for track, track_layers in zip(chosen, layers):
            if len(voices) == cfg.n_tracks:
                break
            if len(track_layers) > depth and track_layers[depth]:
                voices.append(Voice(track.program, track_layers[depth]))
        depth += 1

    while len(voices) < cfg.n_tracks:
        voices.append(Voice(0, []))
    return voices


# Quantization

def _to_step(tick: int, ticks_per_quarter: int) -> int:
    # nearest 16th-note grid point, ties toward the later step
    return (2 * STEPS_PER_QUARTER * tick + ticks_per_quarter) // (2 * ticks_per_quarter)


def quantize(notes: Sequence[NoteEvent], doc: MidiDocument) -> StepSequence:
    """
    Snaps a monophonic note list to the 16th-note grid. Every note keeps at least one step;
    when rounding makes notes overlap the later note wins.
    """
    tpq = doc.ticks_per_quarter
    pieces: List[List[int]] = []
    for note in sorted(notes, key=lambda n: (n.onset_ticks, n.pitch)):
        start = _to_step(note.onset_ticks, tpq)
        end = max(start + 1, _to_step(note.offset_ticks, tpq))
        while pieces and pieces[-1][1] > start:
            if pieces[-1][0] >= start:
                pieces.pop()
            else:
                pieces[-1][1] = start
                break
        pieces.append([start, end, note.pitch, note.velocity])

    length = pieces[-1][1] if pieces else 0
    pitch = np.full(length, -1, dtype=np.int64)
    velocity = np.zeros(length, dtype=np.int64)
    onset = np.zeros(length, dtype=bool)
    for start, end, note_pitch, note_velocity in pieces:
        pitch[start:end] = note_pitch
        velocity[start:end] = note_velocity
        onset[start] = True
    return StepSequence(pitch=pitch, velocity=velocity, onset=onset)


# Velocity mapping

def velocity_to_unit(v: int) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 0 <= v <= 127:
        raise InvalidParameter(f"velocity must be an integer in [0, 127]. Input value: {v!r}.")
    return 0.5 + 0.5 * (int(v) + 1) / 128


def velocities_to_unit(values: np.ndarray) -> np.ndarray:
    return 0.5 + 0.5 * (np.asarray(values, dtype=np.float64) + 1) / 128


def unit_to_velocity(u: float) -> Optional[int]:
    """Returns None when 'u' is not an onset (u <= 0.5)."""
    if not u > ONSET_THRESHOLD:
        return None
    return int(min(127, max(0, round(float(u) * 2 * 128 - 128 - 1))))


def fold_pitch(pitch: int, cfg: RollConfig) -> Optional[int]:
    """Transposes by octaves into [pitch_lo, pitch_hi_exclusive); None when unreachable."""
    while pitch < cfg.pitch_lo:
        pitch += 12
    while pitch >= cfg.pitch_hi_exclusive:
        pitch -= 12
    return pitch if pitch >= cfg.pitch_lo else None


# Songs

def encode_song(
    doc: MidiDocument,
    style: StyleLabel,
    cfg: RollConfig,
    song_id: str = '',
    source_path: str = '',
) -> SongRecord:
    """
    Converts a document into one-bar pitch/velocity rolls plus its instrument assignment.

    Parameters
    ----------------
    doc: MidiDocument
        Field is required.
    style: StyleLabel
        Field is required.
    cfg: RollConfig
        Field is required.
    song_id: str
        Identifier stamped on every bar.
        Field is not required. Default: source_path.
    source_path: str
        Field is not required.
    """
    voices = select_voices(doc, cfg)
    sequences = []
    for voice in voices:
        folded = []
        for note in voice.notes:
            pitch = fold_pitch(note.pitch, cfg)
            if pitch is not None:
                folded.append(replace(note, pitch=pitch))
        sequences.append(quantize(folded, doc))

    total = max(len(sequence) for sequence in sequences)
    n_bars = max(1, math.ceil(total / cfg.n_steps))
    pitch = np.full((n_bars * cfg.n_steps, cfg.n_tracks), cfg.silence_index, dtype=np.int64)
    velocity = np.full((n_bars * cfg.n_steps, cfg.n_tracks), SILENT_VALUE, dtype=np.float32)
    for track, sequence in enumerate(sequences):
        sounding = sequence.pitch >= 0
        steps = np.flatnonzero(sounding)
        pitch[steps, track] = sequence.pitch[steps] - cfg.pitch_lo
        velocity[steps, track] = np.where(
            sequence.onset[steps],
            velocities_to_unit(sequence.velocity[steps]),
            HOLD_VALUE,
        )

    song_id = song_id or source_path
    bars = [
        BarSample(
            pitch=pitch[i * cfg.n_steps:(i + 1) * cfg.n_steps].copy(),
            velocity=velocity[i * cfg.n_steps:(i + 1) * cfg.n_steps].copy(),
            bar_index=i,
            song_id=song_id,
        )
        for i in range(n_bars)
    ]
    return SongRecord(
        bars=bars,
        instruments=tuple(int(voice.program) for voice in voices),
        style=style,
        source_path=source_path,
    )


def output_ticks_per_quarter(ticks_per_quarter: int) -> int:
    """Smallest multiple of the step grid that is at least 'ticks_per_quarter'."""
    return max(STEPS_PER_QUARTER, -(-int(ticks_per_quarter) // STEPS_PER_QUARTER) * STEPS_PER_QUARTER)


def decode_song(
    rec: SongRecord,
    cfg: RollConfig,
    tempo_bpm: float = DEFAULT_TEMPO_BPM,
    ticks_per_quarter: int = DEFAULT_TICKS_PER_QUARTER,
) -> MidiDocument:
    """
    Converts rolls back into notes: an onset (velocity > 0.5) or a pitch change starts a
    note, equal pitches without onset are held, the silence symbol ends the note.
    """
    if ticks_per_quarter <= 0 or ticks_per_quarter % STEPS_PER_QUARTER:
        raise InvalidParameter(
            f"ticks_per_quarter must be a positive multiple of {STEPS_PER_QUARTER}. Input value: {ticks_per_quarter}."
        )
    step_ticks = ticks_per_quarter // STEPS_PER_QUARTER
    pitch = rec.pitch_roll() if rec.bars else np.zeros((0, cfg.n_tracks), dtype=np.int64)
    velocity = rec.velocity_roll() if rec.bars else np.zeros((0, cfg.n_tracks), dtype=np.float32)
    n_steps = len(pitch)
    channels = [channel for channel in range(16) if channel != DRUM_CHANNEL]

    tracks = []
    for track in range(cfg.n_tracks):
        channel = channels[track % len(channels)]
        events = []
        current = None
        last_velocity = DEFAULT_VELOCITY
        for step in range(n_steps + 1):
            symbol = int(pitch[step, track]) if step < n_steps else cfg.silence_index
            value = float(velocity[step, track]) if step < n_steps else SILENT_VALUE
            starts = symbol != cfg.silence_index and (
                current is None or value > ONSET_THRESHOLD or symbol != current[1]
            )
            if current is not None and (symbol == cfg.silence_index or starts):
                start, note_symbol, note_velocity = current
                events.append(NoteEvent(
                    onset_ticks=start * step_ticks,
                    duration_ticks=(step - start) * step_ticks,
                    pitch=note_symbol + cfg.pitch_lo,
                    velocity=note_velocity,
                    channel=channel,
                ))
                current = None
            if starts:
                decoded = unit_to_velocity(value)
                note_velocity = last_velocity if decoded is None else max(1, decoded)
                last_velocity = note_velocity
                current = (step, symbol, note_velocity)
        tracks.append(MidiTrack(program=int(rec.instruments[track]), is_drum=False, events=events))

    return MidiDocument(ticks_per_quarter=ticks_per_quarter, tempo_bpm=tempo_bpm, tracks=tracks)


# Recurrent network frames

def unroll_batch(pitch: np.ndarray, velocity: np.ndarray, cfg: RollConfig) -> FrameSequence:
    """
    Unrolls stacked bars (batch x n_steps x n_tracks) into frames of
    (batch x n_steps*n_tracks); frame f is (step f // n_tracks, track f % n_tracks).
    """
    batch = pitch.shape[0]
    symbols = pitch.reshape(batch, cfg.frames_per_bar)
    onehot = np.eye(cfg.vocab_size, dtype=np.float32)[symbols]
    return FrameSequence(
        pitch=onehot,
        velocity=velocity.reshape(batch, cfg.frames_per_bar).astype(np.float32),
        track=np.tile(np.arange(cfg.n_tracks), cfg.n_steps),
    )


def unroll(bar: BarSample, cfg: RollConfig) -> FrameSequence:
    frames = unroll_batch(bar.pitch[None], bar.velocity[None], cfg)
    return FrameSequence(pitch=frames.pitch[0], velocity=frames.velocity[0], track=frames.track)


def reroll(frames: FrameSequence, cfg: RollConfig, bar_index: int = 0, song_id: str = '') -> BarSample:
    if len(frames) != cfg.frames_per_bar:
        raise InvalidRoll(f"Expected {cfg.frames_per_bar} frames, got {len(frames)}.")
    return BarSample(
        pitch=np.argmax(frames.pitch, axis=-1).astype(np.int64).reshape(cfg.n_steps, cfg.n_tracks),
        velocity=np.asarray(frames.velocity, dtype=np.float32).reshape(cfg.n_steps, cfg.n_tracks),
        bar_index=bar_index,
        song_id=song_id,
    )


# Dataset split

def split_dataset(
    songs: Sequence[SongRecord],
    ratio: float,
    seed: Union[int, np.random.Generator],
) -> Tuple[List[SongRecord], List[SongRecord]]:
    """
    Splits at song granularity, stratified by style. Each style gives up a share of its
    songs to the test set proportional to its size (largest remainder, seeded tie-break)
    and keeps at least one training song while any other style can still give one up.
    Both partitions keep the input order.
    """
    if not 0 < ratio < 1:
        raise DatasetSplitError(f"ratio must lie in (0, 1). Input value: {ratio}.")
    if len(songs) < 2:
        raise DatasetSplitError(f"Need at least 2 songs to split, got {len(songs)}.")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_train = min(len(songs) - 1, max(1, int(round(ratio * len(songs)))))
    n_test = len(songs) - n_train

    groups = {}
    for index, song in enumerate(songs):
        groups.setdefault(song.style.index, []).append(index)
    styles = sorted(groups)
    shuffled = {style: rng.permutation(groups[style]).tolist() for style in styles}
    quota = {style: (1 - ratio) * len(groups[style]) for style in styles}
    taken = {style: min(int(math.floor(quota[style] + 1e-9)), len(groups[style]) - 1) for style in styles}
    tie_break = dict(zip(styles, rng.random(len(styles))))
    by_remainder = sorted(styles, key=lambda style: (-(quota[style] - taken[style]), tie_break[style]))

    for keep in (1, 0):
        for style in by_remainder * len(songs):
            if sum(taken.values()) >= n_test:
                break
            if taken[style] < len(groups[style]) - keep:
                taken[style] += 1
    while sum(taken.values()) > n_test:
        style = max((s for s in styles if taken[s]), key=lambda s: (taken[s] - quota[s], tie_break[s]))
        taken[style] -= 1

    test_idx = sorted(i for style in styles for i in shuffled[style][:taken[style]])
    chosen = set(test_idx)
    train_idx = [i for i in range(len(songs)) if i not in chosen]
    return [songs[i] for i in train_idx], [songs[i] for i in test_idx]
