import io
import struct

import pytest

from midivae.exceptions import (
    BadVarint,
    InvalidDocument,
    MalformedEvent,
    MalformedHeader,
    MidiParseError,
    TruncatedChunk,
    UnsupportedFormat,
)
from midivae.midi.midi_io import (
    MidiDocument,
    MidiTrack,
    NoteEvent,
    TimeSignature,
    normalize,
    parse_midi,
    read_midi_file,
    write_midi,
    write_midi_file,
)


def smf(*bodies: bytes, fmt: int = 1, division: int = 480) -> bytes:
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, len(bodies), division)
    return header + b"".join(b"MTrk" + struct.pack(">I", len(body)) + body for body in bodies)


END = b"\x00\xFF\x2F\x00"


def sample_doc() -> MidiDocument:
    return MidiDocument(
        ticks_per_quarter=480,
        tempo_bpm=90.0,
        tracks=[
            MidiTrack(program=33, events=[
                NoteEvent(0, 240, 40, 90, 0),
                NoteEvent(240, 240, 43, 70, 0),
                NoteEvent(960, 480, 45, 100, 0),
            ]),
            MidiTrack(program=0, events=[
                NoteEvent(0, 960, 60, 64, 1),
                NoteEvent(0, 960, 64, 64, 1),
            ]),
            MidiTrack(program=0, is_drum=True, events=[NoteEvent(0, 120, 36, 127, 9)]),
        ],
        time_signatures=[TimeSignature(4, 4, 0)],
    )


def test_write_then_parse_gives_normalized_document():
    doc = sample_doc()
    assert parse_midi(write_midi(doc)) == normalize(doc)


def test_default_tempo_is_not_written_and_parses_back():
    doc = MidiDocument(tracks=[MidiTrack(program=5, events=[NoteEvent(0, 120, 60, 80, 0)])])
    data = write_midi(doc)
    assert b"\xFF\x51" not in data
    parsed = parse_midi(data)
    assert parsed.tempo_bpm == 120.0
    assert parsed.tracks[0].program == 5


def test_file_helpers_round_trip(tmp_path):
    path = write_midi_file(tmp_path / 'nested' / 'song.mid', sample_doc())
    assert read_midi_file(path) == normalize(sample_doc())


def test_note_on_with_zero_velocity_ends_the_note():
    body = b"\x00\x90\x3C\x50" + b"\x60\x90\x3C\x00" + END
    doc = parse_midi(smf(body))
    assert doc.tracks[0].events == [NoteEvent(0, 0x60, 60, 0x50, 0)]


def test_running_status_is_honoured():
    body = b"\x00\x90\x3C\x50" + b"\x00\x40\x50" + b"\x60\x3C\x00" + b"\x00\x40\x00" + END
    doc = parse_midi(smf(body))
    assert [event.pitch for event in doc.tracks[0].events] == [60, 64]


def test_repeated_note_on_closes_the_open_note():
    body = b"\x00\x90\x3C\x50" + b"\x10\x90\x3C\x60" + b"\x20\x80\x3C\x00" + END
    events = parse_midi(smf(body)).tracks[0].events
    assert events == [NoteEvent(0, 0x10, 60, 0x50, 0), NoteEvent(0x10, 0x20, 60, 0x60, 0)]


def test_tracks_are_split_by_channel_and_drums_flagged():
    body = b"\x00\x91\x3C\x50" + b"\x00\x99\x24\x50" + b"\x10\x81\x3C\x00" + b"\x00\x89\x24\x00" + END
    doc = parse_midi(smf(body))
    assert [(track.events[0].channel, track.is_drum) for track in doc.tracks] == [(1, False), (9, True)]


def test_program_change_in_another_track_applies_to_the_channel():
    conductor = b"\x00\xC0\x18" + END
    notes = b"\x00\x90\x3C\x50\x10\x80\x3C\x00" + END
    assert parse_midi(smf(conductor, notes)).tracks[0].program == 0x18


def test_first_tempo_event_wins():
    conductor = b"\x00\xFF\x51\x03\x07\xA1\x20" + b"\x10\xFF\x51\x03\x0F\x42\x40" + END
    doc = parse_midi(smf(conductor))
    assert doc.tempo_bpm == pytest.approx(120.0)
    assert doc.tracks == []


@pytest.mark.parametrize('data, error, offset', [
    (b"RIFF" + b"\x00" * 10, MalformedHeader, 0),
    (b"MThd\x00\x00\x00\x04\x00\x01\x00\x01", MalformedHeader, 4),
    (b"MThd" + struct.pack(">IHHH", 6, 2, 1, 480), UnsupportedFormat, 8),
    (b"MThd" + struct.pack(">IHHH", 6, 1, 1, 0xE250), UnsupportedFormat, 12),
    (b"MThd" + struct.pack(">IHHH", 6, 1, 1, 480) + b"MTrk\x00\x00\x00\x10\x00", TruncatedChunk, 14),
])
def test_header_and_chunk_errors(data, error, offset):
    with pytest.raises(error) as info:
        parse_midi(data)
    assert info.value.offset == offset


def test_overlong_varint_is_rejected():
    with pytest.raises(BadVarint) as info:
        parse_midi(smf(b"\x81\x81\x81\x81\x00\x90\x3C\x50" + END))
    assert info.value.offset == 22


def test_running_status_without_status_is_rejected():
    with pytest.raises(MalformedEvent):
        parse_midi(smf(b"\x00\x3C\x50" + END))


def test_truncated_event_inside_track():
    with pytest.raises(TruncatedChunk):
        parse_midi(smf(b"\x00\x90\x3C"))


def test_parse_errors_share_a_base_class():
    with pytest.raises(MidiParseError):
        parse_midi(b"")


@pytest.mark.parametrize('doc', [
    MidiDocument(ticks_per_quarter=0),
    MidiDocument(tempo_bpm=0.0),
    MidiDocument(tracks=[MidiTrack(program=128)]),
    MidiDocument(tracks=[MidiTrack(events=[NoteEvent(0, 10, 60, 0, 0)])]),
    MidiDocument(tracks=[MidiTrack(events=[NoteEvent(0, 10, 60, 64, 0), NoteEvent(0, 10, 62, 64, 1)])]),
    MidiDocument(tracks=[MidiTrack(is_drum=False, events=[NoteEvent(0, 10, 36, 64, 9)])]),
    MidiDocument(time_signatures=[TimeSignature(3, 3, 0)]),
])
def test_invalid_documents_are_not_written(doc):
    with pytest.raises(InvalidDocument):
        write_midi(doc)


def test_third_party_reader_agrees():
    mido = pytest.importorskip('mido')
    doc = sample_doc()
    midi_file = mido.MidiFile(file=io.BytesIO(write_midi(doc)))
    assert midi_file.ticks_per_beat == doc.ticks_per_quarter
    note_ons = [msg for track in midi_file.tracks for msg in track if msg.type == 'note_on' and msg.velocity > 0]
    assert len(note_ons) == doc.note_count
    tempos = [msg.tempo for track in midi_file.tracks for msg in track if msg.type == 'set_tempo']
    assert tempos == [round(60_000_000 / 90.0)]
    assert sorted(msg.note for msg in note_ons) == sorted(e.pitch for t in doc.tracks for e in t.events)
