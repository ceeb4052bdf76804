import numpy as np
import pytest

from midivae.config import HOLD_VALUE
from midivae.exceptions import DatasetSplitError, InvalidParameter, InvalidRoll, NoPlayableTracks
from midivae.midi.midi_io import MidiDocument, MidiTrack, NoteEvent, parse_midi, write_midi
from midivae.midi.roll_codec import (
    BarSample,
    RollConfig,
    StyleLabel,
    decode_song,
    encode_song,
    fold_pitch,
    output_ticks_per_quarter,
    quantize,
    reroll,
    select_voices,
    split_dataset,
    unit_to_velocity,
    unroll,
    velocity_to_unit,
)

from .conftest import random_song

STYLE = StyleLabel(0, 'style_0')


def through_midi(song, cfg):
    return encode_song(parse_midi(write_midi(decode_song(song, cfg))), song.style, cfg, song_id=song.song_id)


def test_random_records_survive_decode_write_parse_encode():
    cfg = RollConfig()
    rng = np.random.default_rng(2024)
    for index in range(500):
        song = random_song(rng, cfg, n_bars=int(rng.integers(1, 4)), song_id=f"s{index}")
        song.validate(cfg)
        again = through_midi(song, cfg)
        assert again.same_rolls(song), f"record {index} changed"


def test_small_roll_config_round_trips(tiny_cfg):
    rng = np.random.default_rng(5)
    for _ in range(50):
        song = random_song(rng, tiny_cfg, n_bars=3)
        assert through_midi(song, tiny_cfg).same_rolls(song)


def test_velocity_mapping_is_exact_on_the_midi_grid():
    for v in range(128):
        assert unit_to_velocity(velocity_to_unit(v)) == v
        assert unit_to_velocity(np.float32(velocity_to_unit(v))) == v
        assert velocity_to_unit(v) > 0.5
    assert unit_to_velocity(HOLD_VALUE) is None
    assert unit_to_velocity(0.5) is None
    with pytest.raises(InvalidParameter):
        velocity_to_unit(128)



def test_velocity_code_zero_decodes_as_the_quietest_note():
    cfg = RollConfig()
    doc = MidiDocument(tracks=[MidiTrack(program=0, events=[NoteEvent(0, 480, 60, 1, 0)])])
    song = encode_song(doc, STYLE, cfg)
    song.bars[0].velocity[0, 0] = velocity_to_unit(0)
    assert unit_to_velocity(song.bars[0].velocity[0, 0]) == 0
    note = decode_song(song, cfg).tracks[0].events[0]
    assert (note.onset_ticks, note.duration_ticks, note.velocity) == (0, 480, 1)


@pytest.mark.parametrize('pitch, expected', [(24, 24), (83, 83), (12, 24), (0, 24), (84, 72), (127, 79), (23, 35)])
def test_out_of_range_pitches_fold_by_octaves(pitch, expected):
    assert fold_pitch(pitch, RollConfig()) == expected


def test_fold_returns_none_when_the_range_is_narrower_than_an_octave(tiny_cfg):
    assert fold_pitch(59, tiny_cfg) is None
    assert fold_pitch(71, tiny_cfg) is None
    assert fold_pitch(63, tiny_cfg) == 63


def test_encode_song_quantizes_and_marks_onsets():
    doc = MidiDocument(tracks=[MidiTrack(program=40, events=[
        NoteEvent(0, 240, 60, 100, 0),
        NoteEvent(250, 110, 62, 1, 0),
        NoteEvent(480 * 4, 120, 96, 64, 0),
    ])])
    song = encode_song(doc, STYLE, RollConfig(), song_id='x')
    cfg = RollConfig()
    assert len(song) == 2
    assert song.instruments == (40, 0, 0, 0)
    roll = song.pitch_roll()[:, 0]
    assert roll[:2].tolist() == [60 - cfg.pitch_lo] * 2
    assert roll[2] == 62 - cfg.pitch_lo
    assert roll[16] == 72 - cfg.pitch_lo
    assert roll[3] == cfg.silence_index
    velocity = song.velocity_roll()[:, 0]
    assert velocity[0] == np.float32(velocity_to_unit(100))
    assert velocity[1] == HOLD_VALUE
    assert velocity[3] == 0.0
    assert np.all(song.pitch_roll()[:, 1:] == cfg.silence_index)
    assert [bar.bar_index for bar in song.bars] == [0, 1]
    assert {bar.song_id for bar in song.bars} == {'x'}


def test_quantize_keeps_one_step_and_later_note_wins():
    doc = MidiDocument()
    steps = quantize([NoteEvent(0, 10, 60, 50, 0), NoteEvent(100, 380, 62, 60, 0)], doc)
    assert steps.pitch.tolist() == [60, 62, 62, 62]
    assert steps.onset.tolist() == [True, True, False, False]
    steps = quantize([NoteEvent(0, 480, 60, 50, 0), NoteEvent(240, 240, 62, 60, 0)], doc)
    assert steps.pitch.tolist() == [60, 60, 62, 62]
    assert steps.velocity.tolist() == [50, 50, 60, 60]


def test_voices_prefer_busy_tracks_then_split_chords():
    sparse = MidiTrack(program=1, events=[NoteEvent(0, 120, 50, 64, 0)])
    chords = MidiTrack(program=2, events=[
        NoteEvent(0, 480, 60, 64, 1), NoteEvent(0, 480, 64, 64, 1), NoteEvent(480, 480, 62, 64, 1),
    ])
    drums = MidiTrack(program=0, is_drum=True, events=[NoteEvent(t, 60, 36, 64, 9) for t in range(0, 960, 120)])
    voices = select_voices(MidiDocument(tracks=[sparse, chords, drums]), RollConfig(n_tracks=3))
    assert [voice.program for voice in voices] == [2, 1, 2]
    assert [note.pitch for note in voices[0].notes] == [64, 62]
    assert [note.pitch for note in voices[2].notes] == [60]


def test_drum_only_documents_have_no_playable_tracks():
    drums = MidiTrack(program=0, is_drum=True, events=[NoteEvent(0, 60, 36, 64, 9)])
    with pytest.raises(NoPlayableTracks):
        encode_song(MidiDocument(tracks=[drums]), STYLE, RollConfig())


def test_unroll_is_step_major(tiny_cfg):
    pitch = np.arange(tiny_cfg.n_steps * tiny_cfg.n_tracks).reshape(tiny_cfg.n_steps, tiny_cfg.n_tracks) % tiny_cfg.vocab_size
    bar = BarSample(pitch=pitch, velocity=np.linspace(0, 1, pitch.size, dtype=np.float32).reshape(pitch.shape), bar_index=3, song_id='a')
    frames = unroll(bar, tiny_cfg)
    assert len(frames) == tiny_cfg.frames_per_bar
    assert frames.track.tolist() == [0, 1] * tiny_cfg.n_steps
    assert np.argmax(frames.pitch, axis=-1).tolist() == pitch.reshape(-1).tolist()
    assert reroll(frames, tiny_cfg, bar_index=3, song_id='a') == bar


def test_reroll_rejects_wrong_frame_count(tiny_cfg):
    frames = unroll(BarSample(np.zeros((4, 2), dtype=np.int64), np.zeros((4, 2), dtype=np.float32)), tiny_cfg)
    frames.track = frames.track[:-1]
    with pytest.raises(InvalidRoll):
        reroll(frames, tiny_cfg)


def test_validate_catches_broken_rolls(tiny_cfg):
    song = random_song(np.random.default_rng(0), tiny_cfg, n_bars=2)
    song.validate(tiny_cfg)
    song.bars[1].pitch[0, 0] = tiny_cfg.silence_index
    song.bars[1].velocity[0, 0] = 0.9
    with pytest.raises(InvalidRoll):
        song.validate(tiny_cfg)


def test_roll_config_checks_the_pitch_range():
    with pytest.raises(InvalidParameter):
        RollConfig(n_pitches=10, pitch_lo=24, pitch_hi_exclusive=84)


def test_split_is_deterministic_disjoint_and_ordered(tiny_cfg):
    rng = np.random.default_rng(1)
    songs = [random_song(rng, tiny_cfg, 1, song_id=f"s{i}") for i in range(20)]
    train, test = split_dataset(songs, 0.9, seed=3)
    again = split_dataset(songs, 0.9, seed=3)
    assert [s.song_id for s in train] == [s.song_id for s in again[0]]
    assert len(train) == 18 and len(test) == 2
    assert not {s.song_id for s in train} & {s.song_id for s in test}
    position = {song.song_id: index for index, song in enumerate(songs)}
    assert [position[s.song_id] for s in train] == sorted(position[s.song_id] for s in train)


@pytest.mark.parametrize('ratio, count', [(0.0, 5), (1.0, 5), (0.5, 1)])
def test_split_rejects_bad_input(tiny_cfg, ratio, count):
    rng = np.random.default_rng(1)
    songs = [random_song(rng, tiny_cfg, 1) for _ in range(count)]
    with pytest.raises(DatasetSplitError):
        split_dataset(songs, ratio, seed=0)


@pytest.mark.parametrize('ticks, expected', [(1, 4), (2, 4), (4, 4), (90, 92), (96, 96), (480, 480)])
def test_output_resolution_is_the_next_multiple_of_the_step_grid(ticks, expected):
    assert output_ticks_per_quarter(ticks) == expected


@pytest.mark.parametrize('ticks', [2, 90])
def test_coarse_or_odd_resolutions_decode_on_the_quarter_grid(ticks):
    cfg = RollConfig()
    doc = MidiDocument(ticks_per_quarter=ticks, tracks=[MidiTrack(program=0, events=[
        NoteEvent(0, ticks, 60, 100, 0),
        NoteEvent(2 * ticks, 2 * ticks, 64, 80, 0),
    ])])
    song = encode_song(doc, STYLE, cfg)
    out = output_ticks_per_quarter(ticks)
    decoded = decode_song(song, cfg, ticks_per_quarter=out)
    notes = decoded.tracks[0].events
    assert [(n.onset_ticks, n.duration_ticks) for n in notes] == [(0, out), (2 * out, 2 * out)]
    again = encode_song(parse_midi(write_midi(decoded)), STYLE, cfg)
    assert again.same_rolls(song)


@pytest.mark.parametrize('ticks', [0, 2, 90])
def test_decode_rejects_resolutions_off_the_step_grid(ticks):
    cfg = RollConfig()
    doc = MidiDocument(tracks=[MidiTrack(program=0, events=[NoteEvent(0, 480, 60, 100, 0)])])
    with pytest.raises(InvalidParameter):
        decode_song(encode_song(doc, STYLE, cfg), cfg, ticks_per_quarter=ticks)


def test_split_gives_each_style_its_share_of_the_test_set(tiny_cfg):
    rng = np.random.default_rng(4)
    songs = [random_song(rng, tiny_cfg, 1, style=i % 2, song_id=f"s{i}") for i in range(20)]
    for seed in range(10):
        train, test = split_dataset(songs, 0.9, seed=seed)
        assert sorted(song.style.index for song in test) == [0, 1]
        assert len(train) == 18


def test_split_never_moves_a_style_out_of_training(tiny_cfg):
    rng = np.random.default_rng(4)
    songs = [random_song(rng, tiny_cfg, 1, style=0, song_id='lonely')]
    songs += [random_song(rng, tiny_cfg, 1, style=1, song_id=f"s{i}") for i in range(5)]
    for seed in range(10):
        train, test = split_dataset(songs, 0.5, seed=seed)
        assert 'lonely' in {song.song_id for song in train}
        assert len(test) == 3 and {song.style.index for song in test} == {1}
