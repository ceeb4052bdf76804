import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..config import DEFAULT_TEMPO_BPM, DEFAULT_TICKS_PER_QUARTER, STEPS_PER_BAR, STEPS_PER_QUARTER
from ..exceptions import InvalidParameter
from ..midi.midi_io import MidiDocument, MidiTrack, NoteEvent, write_midi_file

logger = logging.getLogger(__name__)

# steps per note of each voice; distinct densities keep the voice order stable
TRACK_NOTE_STEPS = (1, 2, 4, 8)
REST_PROBABILITY = 0.1


@dataclass(frozen=True)
class ToyStyle:
    name: str
    register: Tuple[int, int]
    programs: Tuple[int, ...]
    velocity_band: Tuple[int, int]

    def __post_init__(self):
        lo, hi = self.register
        if not 0 <= lo < hi <= 128:
            raise InvalidParameter(f"Style '{self.name}': register must satisfy 0 <= lo < hi <= 128. Input value: {self.register}.")
        lo, hi = self.velocity_band
        if not 1 <= lo <= hi <= 127:
            raise InvalidParameter(f"Style '{self.name}': velocity band must lie in [1, 127]. Input value: {self.velocity_band}.")
        if len(self.programs) != len(TRACK_NOTE_STEPS) or not all(0 <= p <= 127 for p in self.programs):
            raise InvalidParameter(f"Style '{self.name}': needs {len(TRACK_NOTE_STEPS)} programs in [0, 127].")


def _default_styles() -> Tuple[ToyStyle, ...]:
    return (
        ToyStyle('style_a', (24, 48), (0, 1, 2, 3), (40, 70)),
        ToyStyle('style_b', (60, 84), (64, 65, 66, 67), (90, 120)),
    )


@dataclass(frozen=True)
class ToyCorpusSpec:
    """
    Synthetic two-style corpus whose styles differ in register, instruments and loudness.

    * Main use case:

    >>> make_toy_corpus(ToyCorpusSpec(songs_per_style=40, bars_per_song=16), 'data/toy')

    Parameters
    ----------------
    songs_per_style: int
        Field is not required. Default: 40.
    bars_per_song: int
        Field is not required. Default: 16.
    styles: tuple of ToyStyle
        Registers and program sets must be pairwise disjoint.
        Field is not required. Default: 'style_a' in [24, 48) on programs 0-3 with velocities 40-70,
        'style_b' in [60, 84) on programs 64-67 with velocities 90-120.
    seed: int
        Field is not required. Default: 0.
    """
    songs_per_style: int = 40
    bars_per_song: int = 16
    styles: Tuple[ToyStyle, ...] = field(default_factory=_default_styles)
    seed: int = 0
    ticks_per_quarter: int = DEFAULT_TICKS_PER_QUARTER

    def __post_init__(self):
        if self.songs_per_style < 1 or self.bars_per_song < 1:
            raise InvalidParameter("'songs_per_style' and 'bars_per_song' must be >= 1.")
        if len({style.name for style in self.styles}) != len(self.styles):
            raise InvalidParameter("Toy style names must be distinct.")
        for i, a in enumerate(self.styles):
            for b in self.styles[i + 1:]:
                if a.register[0] < b.register[1] and b.register[0] < a.register[1]:
                    raise InvalidParameter(f"Registers of '{a.name}' and '{b.name}' overlap.")
                if set(a.programs) & set(b.programs):
                    raise InvalidParameter(f"Program sets of '{a.name}' and '{b.name}' overlap.")


def _voice(style: ToyStyle, track: int, n_steps: int, rng: np.random.Generator, step_ticks: int) -> List[NoteEvent]:
    lo, hi = style.register
    note_steps = TRACK_NOTE_STEPS[track]
    pitch = int(rng.integers(lo, hi))
    events = []
    for start in range(0, n_steps, note_steps):
        # the densest voice never rests so the last bar always sounds
        if track > 0 and rng.random() < REST_PROBABILITY:
            continue
        pitch = int(np.clip(pitch + rng.integers(-3, 4), lo, hi - 1))
        events.append(NoteEvent(
            onset_ticks=start * step_ticks,
            duration_ticks=min(note_steps, n_steps - start) * step_ticks,
            pitch=pitch,
            velocity=int(rng.integers(style.velocity_band[0], style.velocity_band[1] + 1)),
            channel=track,
        ))
    return events


def make_toy_song(style: ToyStyle, n_bars: int, rng: np.random.Generator, ticks_per_quarter: int = DEFAULT_TICKS_PER_QUARTER) -> MidiDocument:
    step_ticks = ticks_per_quarter // STEPS_PER_QUARTER
    n_steps = n_bars * STEPS_PER_BAR
    tracks = [
        MidiTrack(program=program, is_drum=False, events=_voice(style, track, n_steps, rng, step_ticks))
        for track, program in enumerate(style.programs)
    ]
    return MidiDocument(ticks_per_quarter=ticks_per_quarter, tempo_bpm=DEFAULT_TEMPO_BPM, tracks=tracks)


def make_toy_corpus(spec: ToyCorpusSpec, root: Union[str, Path]) -> List[Path]:
    """Writes <root>/<style>/song_NNN.mid for every style; returns the written paths in order."""
    root = Path(root)
    paths = []
    for index, style in enumerate(spec.styles):
        rng = np.random.default_rng([spec.seed, index])
        for number in range(spec.songs_per_style):
            doc = make_toy_song(style, spec.bars_per_song, rng, spec.ticks_per_quarter)
            paths.append(write_midi_file(root / style.name / f"song_{number:03d}.mid", doc))
        logger.info(f"Wrote {spec.songs_per_style} toy songs of style '{style.name}' under '{root / style.name}'")
    return paths
