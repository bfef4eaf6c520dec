"""Standard MIDI File reading and writing.

Only what the generation pipeline needs: note events, the first tempo and
time signature, and the first program change. Percussion (channel 9,
0-indexed) is dropped on read.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_TEMPO = 500000
PERCUSSION_CHANNEL = 9


class MidiError(Exception):
    """Base class for MIDI decoding problems."""


class MidiFormatError(MidiError):
    """Malformed or truncated file."""


class MidiUnsupportedError(MidiError):
    """Well-formed file that uses a feature we do not handle (format 2, SMPTE)."""


@dataclass(frozen=True, order=True)
class NoteEvent:
    pitch: int
    start_tick: int
    end_tick: int
    velocity: int = 80
    channel: int = 0

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel out of range: {self.channel}")
        if self.start_tick < 0 or self.end_tick <= self.start_tick:
            raise ValueError(f"bad note interval [{self.start_tick}, {self.end_tick})")


def _event_key(e: NoteEvent):
    return (e.start_tick, e.pitch, e.channel, e.end_tick, e.velocity)


@dataclass
class Song:
    """Parsed MIDI content.

    ``events`` is kept in canonical order (start tick, then pitch, channel,
    end tick, velocity) so two songs holding the same notes compare equal.
    ``length_ticks`` is the end-of-track position when known; it lets a
    piano roll keep trailing silence through a MIDI round trip.
    """

    ticks_per_beat: int = 480
    tempo: int = DEFAULT_TEMPO
    time_signature: tuple[int, int] = (4, 4)
    events: list[NoteEvent] = field(default_factory=list)
    program: int | None = None
    length_ticks: int | None = None

    def __post_init__(self):
        if self.ticks_per_beat <= 0:
            raise ValueError("ticks_per_beat must be positive")
        self.events = sorted(self.events, key=_event_key)

    @property
    def end_tick(self) -> int:
        last = max((e.end_tick for e in self.events), default=0)
        return max(last, self.length_ticks or 0)

    @property
    def bar_ticks(self) -> int:
        return self.time_signature[0] * self.ticks_per_beat


# --- reading ---------------------------------------------------------------

def _read_varlen(data: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= end:
            raise MidiFormatError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiFormatError("variable-length quantity longer than 4 bytes")


_DATA_LEN = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


class _TrackResult:
    def __init__(self):
        self.notes: list[NoteEvent] = []
        self.tempo: tuple[int, int] | None = None  # (tick, value)
        self.time_signature: tuple[int, tuple[int, int]] | None = None
        self.program: tuple[int, int] | None = None
        self.end_tick = 0


def _parse_track(data: bytes, pos: int, end: int) -> _TrackResult:
    out = _TrackResult()
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    tick = 0
    status = None

    def close(channel, pitch, at):
        stack = open_notes.get((channel, pitch))
        if not stack:
            return
        start, vel = stack.pop(0)
        if at > start:
            out.notes.append(NoteEvent(pitch, start, at, vel, channel))

    while pos < end:
        delta, pos = _read_varlen(data, pos, end)
        tick += delta
        if pos >= end:
            raise MidiFormatError("truncated event")
        byte = data[pos]
        if byte == 0xFF:
            if pos + 2 > end:
                raise MidiFormatError("truncated meta event")
            kind = data[pos + 1]
            length, pos = _read_varlen(data, pos + 2, end)
            if pos + length > end:
                raise MidiFormatError("truncated meta event")
            payload = data[pos:pos + length]
            pos += length
            if kind == 0x51 and length == 3 and out.tempo is None:
                out.tempo = (tick, int.from_bytes(payload, "big"))
            elif kind == 0x58 and length >= 2 and out.time_signature is None:
                out.time_signature = (tick, (payload[0], 2 ** payload[1]))
            elif kind == 0x2F:
                break
            continue
        if byte in (0xF0, 0xF7):
            length, pos = _read_varlen(data, pos + 1, end)
            if pos + length > end:
                raise MidiFormatError("truncated sysex event")
            pos += length
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise MidiFormatError("running status without a previous status byte")
        kind, channel = status >> 4, status & 0x0F
        n = _DATA_LEN.get(kind)
        if n is None:
            raise MidiFormatError(f"unexpected status byte 0x{status:02x}")
        if pos + n > end:
            raise MidiFormatError("truncated channel message")
        d1 = data[pos]
        d2 = data[pos + 1] if n == 2 else 0
        pos += n
        if channel == PERCUSSION_CHANNEL:
            continue
        if kind == 0x9 and d2 > 0:
            open_notes.setdefault((channel, d1), []).append((tick, d2))
        elif kind == 0x8 or kind == 0x9:
            close(channel, d1, tick)
        elif kind == 0xC and out.program is None:
            out.program = (tick, d1)

    out.end_tick = tick
    for (channel, pitch), stack in open_notes.items():
        while stack:
            close(channel, pitch, tick)
    return out


def parse_midi(data: bytes) -> Song:
    """Decode an SMF (format 0 or 1) into a :class:`Song`.

    All tracks are merged into one event stream. Only the first tempo, time
    signature and program change are kept. Notes still sounding at the end
    of a track are closed there.
    """
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiFormatError("missing MThd header")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6 or 8 + header_len > len(data):
        raise MidiFormatError("bad header length")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise MidiUnsupportedError("format 2 files are not supported")
    if fmt > 2:
        raise MidiFormatError(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise MidiUnsupportedError("SMPTE time division is not supported")
    if division == 0:
        raise MidiFormatError("zero ticks per beat")

    pos = 8 + header_len
    tracks = []
    while pos < len(data) and len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise MidiFormatError("truncated chunk header")
        chunk_id = data[pos:pos + 4]
        length = struct.unpack(">I", data[pos + 4:pos + 8])[0]
        body = pos + 8
        if body + length > len(data):
            raise MidiFormatError("truncated chunk")
        if chunk_id == b"MTrk":
            tracks.append(_parse_track(data, body, body + length))
        pos = body + length
    if len(tracks) < ntracks:
        raise MidiFormatError(f"expected {ntracks} tracks, found {len(tracks)}")

    def first(attr):
        found = [getattr(t, attr) for t in tracks if getattr(t, attr) is not None]
        return min(found, key=lambda x: x[0])[1] if found else None

    return Song(
        ticks_per_beat=division,
        tempo=first("tempo") or DEFAULT_TEMPO,
        time_signature=first("time_signature") or (4, 4),
        events=[n for t in tracks for n in t.notes],
        program=first("program"),
        length_ticks=max((t.end_tick for t in tracks), default=0),
    )


def read_midi(path) -> Song:
    return parse_midi(Path(path).read_bytes())


# --- writing ---------------------------------------------------------------

def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(song: Song, instrument: int | None = None) -> bytes:
    """Encode ``song`` as a format-0 SMF.

    Every note becomes an explicit note-on/note-off (0x8n) pair, no running
    status. At equal ticks note-offs are written before note-ons so that
    back-to-back notes of one pitch survive a re-parse. ``instrument``
    defaults to ``song.program`` and then to 0 (acoustic grand piano).
    """
    if instrument is None:
        instrument = song.program if song.program is not None else 0
    if not 0 <= instrument <= 127:
        raise ValueError("instrument must be a program number 0-127")

    track = bytearray()
    track += b"\x00\xff\x51\x03" + song.tempo.to_bytes(3, "big")
    num, den = song.time_signature
    if (num, den) != (4, 4):
        track += b"\x00\xff\x58\x04" + bytes([num, den.bit_length() - 1, 24, 8])
    channels = sorted({e.channel for e in song.events}) or [0]
    for ch in channels:
        track += bytes([0x00, 0xC0 | ch, instrument])

    # (tick, order, bytes): order 0 for offs so they precede ons at one tick
    messages = []
    for e in song.events:
        messages.append((e.start_tick, 1, bytes([0x90 | e.channel, e.pitch, e.velocity])))
        messages.append((e.end_tick, 0, bytes([0x80 | e.channel, e.pitch, 0x40])))
    messages.sort(key=lambda m: (m[0], m[1]))

    tick = 0
    for at, _, msg in messages:
        track += _varlen(at - tick) + msg
        tick = at
    end = max(tick, song.length_ticks or 0)
    track += _varlen(end - tick) + b"\xff\x2f\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, song.ticks_per_beat)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


def save_midi(song: Song, path, instrument: int | None = None) -> None:
    Path(path).write_bytes(write_midi(song, instrument))
