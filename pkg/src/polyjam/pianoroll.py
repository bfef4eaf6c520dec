"""Binary piano rolls: 8 steps per bar, 48 pitches from C2 (MIDI 36) up to B5."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import _kernels
from .midi_io import NoteEvent, Song

STEPS_PER_BAR = 8
LOW_PITCH = 36
N_PITCHES = 48
HIGH_PITCH = LOW_PITCH + N_PITCHES  # exclusive
VELOCITY = 80


def to_piano_roll(song: Song) -> np.ndarray:
    """Rasterize ``song`` into a (T, 48) uint8 roll.

    Step ``t`` is the half-open tick window ``[t*bar/8, (t+1)*bar/8)``; an
    entry is 1 when any in-range note overlaps that window.
    """
    if song.ticks_per_beat <= 0:
        raise ValueError("ticks_per_beat must be positive")
    bar = song.bar_ticks
    n_steps = -(-STEPS_PER_BAR * song.end_tick // bar)
    ev = song.events
    pitches = np.array([e.pitch for e in ev], dtype=np.int64)
    starts = np.array([e.start_tick for e in ev], dtype=np.int64)
    ends = np.array([e.end_tick for e in ev], dtype=np.int64)
    return _kernels.rasterize(pitches, starts, ends, bar, n_steps, LOW_PITCH, N_PITCHES)


def song_roll(song: Song) -> np.ndarray:
    """Piano roll padded with silence to a whole number of bars."""
    roll = to_piano_roll(song)
    pad = -len(roll) % STEPS_PER_BAR
    if pad:
        roll = np.vstack([roll, np.zeros((pad, N_PITCHES), dtype=np.uint8)])
    return roll


def bpm_to_tempo(bpm: float) -> int:
    return int(round(60_000_000 / bpm))


def roll_to_midi(roll, tempo: int = 500000, instrument: int = 0,
                 ticks_per_beat: int = 480) -> Song:
    """Turn a roll back into notes, 4/4 with ``tempo`` microseconds per beat.

    Consecutive active steps of one pitch become a single held note, but a
    note never sustains across a bar line: every bar re-strikes its notes.
    """
    roll = check_roll(roll)
    bar = 4 * ticks_per_beat
    if bar % STEPS_PER_BAR:
        raise ValueError("ticks_per_beat must make a bar divisible into 8 steps")
    step = bar // STEPS_PER_BAR
    runs = _kernels.merge_runs(np.ascontiguousarray(roll, dtype=np.uint8), STEPS_PER_BAR)
    events = [NoteEvent(int(p) + LOW_PITCH, int(s) * step, int(e) * step, VELOCITY, 0)
              for p, s, e in runs]
    return Song(ticks_per_beat, tempo, (4, 4), events, instrument, len(roll) * step)


def check_roll(roll) -> np.ndarray:
    roll = np.asarray(roll)
    if roll.ndim != 2 or roll.shape[1] != N_PITCHES:
        raise ValueError(f"piano roll must have shape (T, {N_PITCHES}), got {roll.shape}")
    if not np.isin(roll, (0, 1)).all():
        raise ValueError("piano roll entries must be 0 or 1")
    return roll.astype(np.uint8)


def dumps_roll(roll) -> str:
    roll = check_roll(roll)
    lines = [f"{len(roll)} {N_PITCHES}"]
    lines += ["".join("1" if v else "0" for v in row) for row in roll]
    return "\n".join(lines) + "\n"


def loads_roll(text: str) -> np.ndarray:
    lines = text.split()
    if len(lines) < 2:
        raise ValueError("roll dump needs a 'T 48' header")
    T, width = int(lines[0]), int(lines[1])
    rows = lines[2:]
    if width != N_PITCHES or len(rows) != T or any(len(r) != width or set(r) - {"0", "1"} for r in rows):
        raise ValueError("roll dump does not match its header")
    if T == 0:
        return np.zeros((0, N_PITCHES), dtype=np.uint8)
    return check_roll(np.array([[c == "1" for c in r] for r in rows], dtype=np.uint8))


def save_roll(roll, path) -> None:
    Path(path).write_text(dumps_roll(roll), encoding="ascii")


def load_roll(path) -> np.ndarray:
    return loads_roll(Path(path).read_text(encoding="ascii"))
