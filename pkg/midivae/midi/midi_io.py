import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Tuple, Union

from ..config import DEFAULT_TEMPO_BPM, DEFAULT_TICKS_PER_QUARTER, DRUM_CHANNEL, MICROSECONDS_PER_MINUTE
from ..exceptions import (
    BadVarint,
    InvalidDocument,
    MalformedEvent,
    MalformedHeader,
    TruncatedChunk,
    UnsupportedFormat,
)


@dataclass(frozen=True)
class NoteEvent:
    onset_ticks: int
    duration_ticks: int
    pitch: int
    velocity: int
    channel: int

    @property
    def offset_ticks(self) -> int:
        return self.onset_ticks + self.duration_ticks


@dataclass(frozen=True)
class TimeSignature:
    numerator: int
    denominator: int
    onset_ticks: int


@dataclass
class MidiTrack:
    program: int = 0
    is_drum: bool = False
    events: List[NoteEvent] = field(default_factory=list)


@dataclass
class MidiDocument:
    """
    Timed-event view of a Standard MIDI File.

    * Main use case:

    >>> from midivae import parse_midi, write_midi
    >>> doc = parse_midi(open('song.mid', 'rb').read())
    >>> doc.tempo_bpm, doc.note_count
    >>> data = write_midi(doc)

    Parameters
    ----------------
    ticks_per_quarter: int
        Time division of the file.
    tempo_bpm: float
        First tempo event of the file. Default: 120.
    tracks: list of MidiTrack
        One entry per (SMF track, channel) that carries notes.
    time_signatures: list of TimeSignature
        Sorted by onset.
    """
    ticks_per_quarter: int = DEFAULT_TICKS_PER_QUARTER
    tempo_bpm: float = DEFAULT_TEMPO_BPM
    tracks: List[MidiTrack] = field(default_factory=list)
    time_signatures: List[TimeSignature] = field(default_factory=list)

    @property
    def note_count(self) -> int:
        return sum(len(track.events) for track in self.tracks)

    def validate(self):
        if not 0 < self.ticks_per_quarter <= 0x7FFF:
            raise InvalidDocument(f"ticks_per_quarter must be in [1, 32767]. Input value: {self.ticks_per_quarter}.")
        if not self.tempo_bpm > 0:
            raise InvalidDocument(f"tempo_bpm must be positive. Input value: {self.tempo_bpm}.")
        if not 0 < round(MICROSECONDS_PER_MINUTE / self.tempo_bpm) <= 0xFFFFFF:
            raise InvalidDocument(f"tempo_bpm {self.tempo_bpm} cannot be stored in a set-tempo event.")
        for ts in self.time_signatures:
            if not 0 < ts.numerator <= 255 or ts.denominator <= 0 or ts.denominator & (ts.denominator - 1):
                raise InvalidDocument(f"Invalid time signature {ts.numerator}/{ts.denominator}.")
            if ts.onset_ticks < 0:
                raise InvalidDocument(f"Time signature onset must be non-negative. Input value: {ts.onset_ticks}.")
        for index, track in enumerate(self.tracks):
            if not 0 <= track.program <= 127:
                raise InvalidDocument(f"Track {index}: program must be in [0, 127]. Input value: {track.program}.")
            channels = {event.channel for event in track.events}
            if len(channels) > 1:
                raise InvalidDocument(f"Track {index}: events span several channels {sorted(channels)}.")
            for event in track.events:
                if not 0 <= event.channel <= 15:
                    raise InvalidDocument(f"Track {index}: channel {event.channel} out of range.")
                if (event.channel == DRUM_CHANNEL) != track.is_drum:
                    raise InvalidDocument(f"Track {index}: is_drum must be set iff the channel is {DRUM_CHANNEL}.")
                if not 0 <= event.pitch <= 127:
                    raise InvalidDocument(f"Track {index}: pitch {event.pitch} out of range.")
                if not 1 <= event.velocity <= 127:
                    raise InvalidDocument(f"Track {index}: velocity {event.velocity} out of range.")
                if event.duration_ticks < 1 or event.onset_ticks < 0:
                    raise InvalidDocument(f"Track {index}: note {event} has a negative onset or empty duration.")


# Reading

def _need(data: bytes, pos: int, count: int, end: int, what: str):
    if pos + count > end:
        raise TruncatedChunk(f"{what} runs past the end of its chunk", pos)


def _read_varint(data: bytes, pos: int, end: int) -> Tuple[int, int]:
    start = pos
    value = 0
    for _ in range(4):
        _need(data, pos, 1, end, "variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise BadVarint("variable-length quantity longer than 4 bytes", start)


@dataclass
class _RawTrack:
    notes: List[NoteEvent] = field(default_factory=list)
    programs: List[Tuple[int, int, int]] = field(default_factory=list)
    tempos: List[Tuple[int, int]] = field(default_factory=list)
    time_signatures: List[TimeSignature] = field(default_factory=list)


def _close(notes, active, key, tick):
    onset, velocity = active.pop(key)
    channel, pitch = key
    notes.append(NoteEvent(onset, max(1, tick - onset), pitch, velocity, channel))


def _parse_track(data: bytes, pos: int, end: int) -> _RawTrack:
    raw = _RawTrack()
    active: Dict[Tuple[int, int], Tuple[int, int]] = {}
    tick = 0
    status = None
    while pos < end:
        delta, pos = _read_varint(data, pos, end)
        tick += delta
        _need(data, pos, 1, end, "event")
        if data[pos] & 0x80:
            event_status = data[pos]
            pos += 1
        elif status is None:
            raise MalformedEvent("running status without a previous status byte", pos)
        else:
            event_status = status

        if event_status == 0xFF:
            _need(data, pos, 1, end, "meta event")
            meta_type = data[pos]
            length, pos = _read_varint(data, pos + 1, end)
            _need(data, pos, length, end, "meta event payload")
            payload = data[pos:pos + length]
            pos += length
            if meta_type == 0x2F:
                break
            if meta_type == 0x51 and length == 3:
                raw.tempos.append((tick, int.from_bytes(payload, 'big')))
            elif meta_type == 0x58 and length >= 2:
                raw.time_signatures.append(TimeSignature(payload[0], 2 ** payload[1], tick))
        elif event_status in (0xF0, 0xF7):
            length, pos = _read_varint(data, pos, end)
            _need(data, pos, length, end, "sysex payload")
            pos += length
        elif event_status >= 0xF0:
            raise MalformedEvent(f"undefined status byte 0x{event_status:02X}", pos - 1)
        else:
            status = event_status
            kind = event_status & 0xF0
            channel = event_status & 0x0F
            size = 1 if kind in (0xC0, 0xD0) else 2
            _need(data, pos, size, end, "channel message")
            body = data[pos:pos + size]
            if any(byte & 0x80 for byte in body):
                raise MalformedEvent("data byte with the high bit set", pos)
            pos += size
            if kind == 0x90 and body[1] > 0:
                key = (channel, body[0])
                if key in active:
                    _close(raw.notes, active, key, tick)
                active[key] = (tick, body[1])
            elif kind == 0x80 or kind == 0x90:
                key = (channel, body[0])
                if key in active:
                    _close(raw.notes, active, key, tick)
            elif kind == 0xC0:
                raw.programs.append((tick, channel, body[0]))

    for key in sorted(active):
        _close(raw.notes, active, key, tick)
    return raw


def _sort_key(event: NoteEvent):
    return (event.onset_ticks, event.pitch, event.duration_ticks, event.velocity)


def parse_midi(data: bytes) -> MidiDocument:
    """
    Parses a Standard MIDI File (format 0 or 1).

    Parameters
    ----------------
    data: bytes
        File content.
        Field is required.
    """
    data = bytes(data)
    if len(data) < 8 or data[0:4] != b"MThd":
        raise MalformedHeader("missing 'MThd' magic", 0)
    (length,) = struct.unpack(">I", data[4:8])
    if length < 6:
        raise MalformedHeader(f"header length {length} is below 6", 4)
    _need(data, 8, length, len(data), "header chunk")
    fmt, _, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2", 8)
    if fmt > 2:
        raise MalformedHeader(f"unknown SMF format {fmt}", 8)
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division", 12)
    if division == 0:
        raise MalformedHeader("zero ticks per quarter", 12)

    raw_tracks: List[_RawTrack] = []
    pos = 8 + length
    while pos < len(data):
        _need(data, pos, 8, len(data), "chunk header")
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + size > len(data):
            raise TruncatedChunk(f"chunk {chunk_id!r} declares {size} bytes", pos)
        if chunk_id == b"MTrk":
            raw_tracks.append(_parse_track(data, body, body + size))
        pos = body + size

    tempos = sorted(
        (tick, order, uspq)
        for order, raw in enumerate(raw_tracks)
        for tick, uspq in raw.tempos
        if uspq > 0
    )
    tempo_bpm = MICROSECONDS_PER_MINUTE / tempos[0][2] if tempos else DEFAULT_TEMPO_BPM

    programs = sorted(
        (tick, order, seq, channel, program)
        for order, raw in enumerate(raw_tracks)
        for seq, (tick, channel, program) in enumerate(raw.programs)
    )

    def program_at(channel: int, tick: int, track_order: int) -> int:
        # a change in the same SMF track wins over changes elsewhere on the channel
        local, shared = None, 0
        for change_tick, order, _, change_channel, program in programs:
            if change_tick > tick:
                break
            if change_channel == channel:
                shared = program
                if order == track_order:
                    local = program
        return shared if local is None else local

    tracks = []
    for order, raw in enumerate(raw_tracks):
        for channel in sorted({note.channel for note in raw.notes}):
            events = sorted((note for note in raw.notes if note.channel == channel), key=_sort_key)
            tracks.append(MidiTrack(
                program=program_at(channel, events[0].onset_ticks, order),
                is_drum=channel == DRUM_CHANNEL,
                events=events,
            ))

    time_signatures = sorted(
        (ts for raw in raw_tracks for ts in raw.time_signatures),
        key=lambda ts: ts.onset_ticks,
    )
    return MidiDocument(
        ticks_per_quarter=division,
        tempo_bpm=tempo_bpm,
        tracks=tracks,
        time_signatures=time_signatures,
    )


# Writing

def _varint(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _resolve_overlaps(events: List[NoteEvent]) -> List[NoteEvent]:
    """Truncates same-pitch overlaps so the later note wins, like parsing does."""
    kept: List[NoteEvent] = []
    last_by_pitch: Dict[int, int] = {}
    for event in sorted(events, key=_sort_key):
        index = last_by_pitch.get(event.pitch)
        if index is not None and kept[index] is not None and event.onset_ticks < kept[index].offset_ticks:
            previous = kept[index]
            if event.onset_ticks == previous.onset_ticks:
                kept[index] = None
            else:
                kept[index] = replace(previous, duration_ticks=event.onset_ticks - previous.onset_ticks)
        last_by_pitch[event.pitch] = len(kept)
        kept.append(event)
    return sorted((event for event in kept if event is not None), key=_sort_key)


def _chunk(events: List[Tuple[int, int, int, bytes]]) -> bytes:
    body = bytearray()
    tick = 0
    for event_tick, _, _, payload in sorted(events, key=lambda e: e[:3]):
        body += _varint(event_tick - tick) + payload
        tick = event_tick
    body += _varint(0) + b"\xFF\x2F\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def _tempo_uspq(tempo_bpm: float) -> int:
    return int(round(MICROSECONDS_PER_MINUTE / tempo_bpm))


def write_midi(doc: MidiDocument) -> bytes:
    """
    Serializes a document as an SMF-1 file: one conductor track with the tempo and
    time signatures, then one track per document track.

    Parameters
    ----------------
    doc: MidiDocument
        Field is required. Must satisfy MidiDocument.validate().
    """
    doc.validate()

    conductor = []
    if doc.tempo_bpm != DEFAULT_TEMPO_BPM:
        conductor.append((0, 0, 0, b"\xFF\x51\x03" + _tempo_uspq(doc.tempo_bpm).to_bytes(3, 'big')))
    for ts in sorted(doc.time_signatures, key=lambda ts: ts.onset_ticks):
        log2 = ts.denominator.bit_length() - 1
        conductor.append((ts.onset_ticks, 1, 0, bytes([0xFF, 0x58, 0x04, ts.numerator, log2, 24, 8])))
    chunks = [_chunk(conductor)]

    for track in doc.tracks:
        if track.is_drum:
            channel = DRUM_CHANNEL
        else:
            channel = track.events[0].channel if track.events else 0
        events = [(0, 0, 0, bytes([0xC0 | channel, track.program]))]
        for note in _resolve_overlaps(track.events):
            events.append((note.offset_ticks, 1, note.pitch, bytes([0x80 | channel, note.pitch, 0x40])))
            events.append((note.onset_ticks, 2, note.pitch, bytes([0x90 | channel, note.pitch, note.velocity])))
        chunks.append(_chunk(events))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(chunks), doc.ticks_per_quarter)
    return header + b"".join(chunks)


def normalize(doc: MidiDocument) -> MidiDocument:
    """
    Returns the form of 'doc' that survives write_midi followed by parse_midi.
    """
    if doc.tempo_bpm == DEFAULT_TEMPO_BPM:
        tempo_bpm = DEFAULT_TEMPO_BPM
    else:
        tempo_bpm = MICROSECONDS_PER_MINUTE / _tempo_uspq(doc.tempo_bpm)
    tracks = [
        MidiTrack(program=track.program, is_drum=track.is_drum, events=_resolve_overlaps(track.events))
        for track in doc.tracks
        if track.events
    ]
    return MidiDocument(
        ticks_per_quarter=doc.ticks_per_quarter,
        tempo_bpm=tempo_bpm,
        tracks=tracks,
        time_signatures=sorted(doc.time_signatures, key=lambda ts: ts.onset_ticks),
    )


def read_midi_file(path: Union[str, Path]) -> MidiDocument:
    return parse_midi(Path(path).read_bytes())


def write_midi_file(path: Union[str, Path], doc: MidiDocument) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_midi(doc))
    return path
