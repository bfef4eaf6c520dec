"""Synthetic songs and corpora for tests, demos and desk-scale experiments.

``python -m polyjam.synthetic DIR`` writes a small MIDI corpus that the
CLI pipeline can run on end to end.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .harmony import SCALE_INTERVALS, KeyEstimate, ScaleType, major_triad
from .midi_io import NoteEvent, Song, save_midi
from .pianoroll import N_PITCHES, STEPS_PER_BAR

CIRCLE_OF_FIFTHS = [(7 * k) % 12 for k in range(12)]  # C G D A E B F# C# Ab Eb Bb F

C_MAJOR, F_MAJOR, G_MAJOR, A_MINOR = (0, 4, 7), (0, 5, 9), (2, 7, 11), (0, 4, 9)
POP_LOOP = [C_MAJOR, F_MAJOR, G_MAJOR, A_MINOR]


def key_song(key: KeyEstimate, ticks_per_beat: int = 480) -> Song:
    """Quarter-note melody in which scale degree ``i`` sounds ``len(scale) + 1 - i`` times."""
    intervals = SCALE_INTERVALS[key.scale_type]
    events, tick = [], 0
    for degree, iv in enumerate(intervals):
        pitch = 60 + (key.root + iv) % 12
        for _ in range(len(intervals) + 1 - degree):
            events.append(NoteEvent(pitch, tick, tick + ticks_per_beat, 80, 0))
            tick += ticks_per_beat
    return Song(ticks_per_beat, events=events)


def all_key_songs() -> dict[KeyEstimate, Song]:
    return {KeyEstimate(r, t): key_song(KeyEstimate(r, t)) for t in ScaleType for r in range(12)}


def circle_walks(n_songs: int = 500, length: int = 32, seed: int = 0,
                 p_step: float = 0.45) -> list[list[tuple]]:
    """Random walks over the 12 major triads placed on the circle of fifths.

    Each bar moves one place clockwise or anticlockwise with probability
    ``p_step`` each and stays put otherwise.
    """
    rng = np.random.default_rng(seed)
    songs = []
    for _ in range(n_songs):
        pos = int(rng.integers(12))
        chords = []
        for _ in range(length):
            chords.append(major_triad(CIRCLE_OF_FIFTHS[pos]))
            r = rng.random()
            if r < p_step:
                pos = (pos + 1) % 12
            elif r < 2 * p_step:
                pos = (pos - 1) % 12
        songs.append(chords)
    return songs


def chord_roll(chords, rng=None) -> np.ndarray:
    """A piano roll accompanying ``chords``: held bass, arpeggio, off-beat chord tones.

    With ``rng`` the arpeggio order in each bar is shuffled.
    """
    roll = np.zeros((STEPS_PER_BAR * len(chords), N_PITCHES), dtype=np.uint8)
    for b, chord in enumerate(chords):
        tones = list(chord)
        if rng is not None:
            rng.shuffle(tones)
        base = b * STEPS_PER_BAR
        for s in range(STEPS_PER_BAR):
            if s < 4:
                roll[base + s, 12 + chord[0]] = 1          # C3 octave
            roll[base + s, 24 + tones[s % len(tones)]] = 1  # C4 octave
            if s % 2 == 0:
                roll[base + s, 36 + tones[(s // 2) % len(tones)]] = 1
    return roll


def toy_song() -> tuple[np.ndarray, list[tuple]]:
    """8 bars of the pop loop C F G Am, twice over."""
    chords = POP_LOOP * 2
    return chord_roll(chords), chords


def random_song(rng: np.random.Generator, n_notes: int = 40, max_tick: int = 8000,
                ticks_per_beat: int = 480) -> Song:
    """Random notes that never overlap on the same (channel, pitch); percussion excluded."""
    channels = [c for c in range(16) if c != 9]
    taken: dict[tuple[int, int], list[tuple[int, int]]] = {}
    events = []
    while len(events) < n_notes:
        ch = int(rng.choice(channels))
        pitch = int(rng.integers(0, 128))
        start = int(rng.integers(0, max_tick))
        end = start + int(rng.integers(1, 2000))
        spans = taken.setdefault((ch, pitch), [])
        if any(start < e and s < end for s, e in spans):
            continue
        spans.append((start, end))
        events.append(NoteEvent(pitch, start, end, int(rng.integers(1, 128)), ch))
    return Song(ticks_per_beat, int(rng.integers(200000, 1000000)), events=events)


def write_demo_corpus(directory, n_songs: int = 12, seed: int = 0) -> list[Path]:
    """Pop-loop songs in random major keys plus one harmonic-minor outlier."""
    from .pianoroll import roll_to_midi

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for k in range(n_songs):
        root = int(rng.integers(12))
        chords = [tuple(sorted((pc + root) % 12 for pc in c)) for c in POP_LOOP * 4]
        roll = chord_roll(chords, rng)
        song = roll_to_midi(roll)
        path = directory / f"song_{k:03d}.mid"
        save_midi(song, path)
        paths.append(path)
    minor = key_song(KeyEstimate(9, ScaleType.HARMONIC_MINOR))
    save_midi(minor, directory / "harmonic_minor.mid")
    paths.append(directory / "harmonic_minor.mid")
    return paths


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: python -m polyjam.synthetic OUTPUT_DIR")
    for p in write_demo_corpus(sys.argv[1]):
        print(p)
