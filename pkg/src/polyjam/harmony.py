"""Key detection, transposition, per-bar chord extraction and the chord vocabulary."""
from __future__ import annotations

import enum
import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .midi_io import MidiError, NoteEvent, Song, read_midi

log = logging.getLogger(__name__)

NOTE_NAMES = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"]

# a chord is an ascending tuple of 1-3 distinct pitch classes; None is a silent bar
Chord = tuple


class ScaleType(enum.IntEnum):
    # declaration order is the tie-break priority
    MAJOR_REL_MINOR = 0
    HARMONIC_MINOR = 1
    MELODIC_MINOR = 2
    BLUES = 3


SCALE_INTERVALS = {
    ScaleType.MAJOR_REL_MINOR: (0, 2, 4, 5, 7, 9, 11),
    ScaleType.HARMONIC_MINOR: (0, 2, 3, 5, 7, 8, 11),
    ScaleType.MELODIC_MINOR: (0, 2, 3, 5, 7, 9, 11),
    ScaleType.BLUES: (0, 3, 5, 6, 7, 10),
}


class KeyEstimate(NamedTuple):
    root: int
    scale_type: ScaleType

    def __str__(self):
        return f"{NOTE_NAMES[self.root]} {self.scale_type.name.lower()}"


def scale_pitch_classes(root: int, scale_type: ScaleType) -> frozenset:
    return frozenset((root + i) % 12 for i in SCALE_INTERVALS[scale_type])


ALL_KEYS = [KeyEstimate(r, t) for t in ScaleType for r in range(12)]


def histogram(events: Iterable[NoteEvent]) -> np.ndarray:
    """Onset count per pitch class (length 12, int64)."""
    pcs = np.fromiter((e.pitch % 12 for e in events), dtype=np.int64)
    return np.bincount(pcs, minlength=12)


def top_pitch_classes(counts, k: int) -> list[int]:
    """The ``k`` most counted nonzero pitch classes; equal counts favour lower classes."""
    order = sorted(range(12), key=lambda pc: (-counts[pc], pc))
    return [pc for pc in order[:k] if counts[pc] > 0]


def detect_key(counts) -> KeyEstimate | None:
    """Match the most frequent pitch classes against the 48 scale sets.

    7-note scales are compared with the top 7 classes, blues with the top 6.
    Returns None when nothing matches.
    """
    counts = np.asarray(counts)
    top = {7: frozenset(top_pitch_classes(counts, 7)), 6: frozenset(top_pitch_classes(counts, 6))}
    for key in ALL_KEYS:
        n = len(SCALE_INTERVALS[key.scale_type])
        if len(top[n]) == n and top[n] == scale_pitch_classes(*key):
            return key
    return None


def transpose(events: Iterable[NoteEvent], shift: int) -> list[NoteEvent]:
    """Shift every pitch by ``shift`` semitones; notes leaving 0-127 are dropped."""
    out, dropped = [], 0
    for e in events:
        p = e.pitch + shift
        if 0 <= p <= 127:
            out.append(NoteEvent(p, e.start_tick, e.end_tick, e.velocity, e.channel))
        else:
            dropped += 1
    if dropped:
        log.warning("transpose by %d dropped %d out-of-range notes", shift, dropped)
    return out


def transpose_song(song: Song, shift: int) -> Song:
    return Song(song.ticks_per_beat, song.tempo, song.time_signature,
                transpose(song.events, shift), song.program, song.length_ticks)


def shift_to_c(root: int) -> int:
    """Smallest-magnitude shift moving ``root`` onto C, in [-6, 5]."""
    return (-root + 6) % 12 - 6


def transpose_chord(chord: Chord | None, k: int) -> Chord | None:
    if chord is None:
        return None
    return tuple(sorted((pc + k) % 12 for pc in chord))


def bar_count(song: Song) -> int:
    bar = song.bar_ticks
    return -(-song.end_tick // bar)


def extract_chords(song: Song) -> list[Chord | None]:
    """One chord per bar: the (up to) three most played pitch classes.

    Each note counts once, in the bar holding its onset.
    """
    n_bars = bar_count(song)
    counts = np.zeros((n_bars, 12), dtype=np.int64)
    bar = song.bar_ticks
    for e in song.events:
        counts[e.start_tick // bar, e.pitch % 12] += 1
    chords = []
    for row in counts:
        top = top_pitch_classes(row, 3)
        chords.append(tuple(sorted(top)) if top else None)
    return chords


_TRIAD_SUFFIX = {(0, 4, 7): "", (0, 3, 7): "m", (0, 3, 6): "dim", (0, 4, 8): "aug",
                 (0, 5, 7): "sus4", (0, 2, 7): "sus2"}


def chord_name(chord: Chord | None) -> str:
    """Readable label: C, Am, Gsus4 ... or the note names joined with '-'."""
    if chord is None:
        return "N"
    for root in chord:
        shape = tuple(sorted((pc - root) % 12 for pc in chord))
        if shape in _TRIAD_SUFFIX:
            return NOTE_NAMES[root] + _TRIAD_SUFFIX[shape]
    return "-".join(NOTE_NAMES[pc] for pc in chord)


def major_triad(root: int) -> Chord:
    return tuple(sorted({root % 12, (root + 4) % 12, (root + 7) % 12}))


class ChordVocab:
    """Chord <-> id mapping. In-vocab ids are ``0..size-1``; ``unknown_id == size``."""

    def __init__(self, chords: Sequence[Chord]):
        self.id_to_chord = [tuple(c) for c in chords]
        self.chord_to_id = {c: i for i, c in enumerate(self.id_to_chord)}
        if len(self.chord_to_id) != len(self.id_to_chord):
            raise ValueError("duplicate chords in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_chord)

    @property
    def unknown_id(self) -> int:
        return self.size

    @property
    def n_ids(self) -> int:
        return self.size + 1

    def encode(self, chord: Chord | None) -> int:
        if chord is None:
            return self.unknown_id
        return self.chord_to_id.get(tuple(chord), self.unknown_id)

    def decode(self, chord_id: int) -> Chord | None:
        if 0 <= chord_id < self.size:
            return self.id_to_chord[chord_id]
        if chord_id == self.unknown_id:
            return None
        raise IndexError(f"chord id {chord_id} out of range")

    def encode_sequence(self, chords: Iterable[Chord | None]) -> list[int]:
        return [self.encode(c) for c in chords]

    def label(self, chord_id: int) -> str:
        return "UNK" if chord_id == self.unknown_id else chord_name(self.decode(chord_id))

    def __eq__(self, other):
        return isinstance(other, ChordVocab) and self.id_to_chord == other.id_to_chord

    def __repr__(self):
        return f"ChordVocab(size={self.size})"

    def dumps(self) -> str:
        lines = [f"{i}\t{','.join(map(str, c))}" for i, c in enumerate(self.id_to_chord)]
        lines.append(f"{self.unknown_id}\tUNK")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ChordVocab":
        chords = []
        for lineno, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            idx, _, body = line.partition("\t")
            if body == "UNK":
                if int(idx) != len(chords):
                    raise ValueError("UNK id must follow the last chord id")
                return cls(chords)
            if int(idx) != len(chords):
                raise ValueError(f"line {lineno + 1}: ids must be dense and ascending")
            chords.append(tuple(int(pc) for pc in body.split(",")))
        raise ValueError("dictionary has no UNK line")

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ChordVocab":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def chord_counts(chord_corpus: Iterable[Iterable[Chord | None]]) -> Counter:
    return Counter(c for song in chord_corpus for c in song if c is not None)


def build_vocab(chord_corpus: Iterable[Iterable[Chord | None]], size: int = 50) -> ChordVocab:
    """The ``size`` most frequent chords, by descending count then ascending tuple.

    If the corpus holds fewer distinct chords than ``size`` the vocabulary
    is correspondingly smaller.
    """
    if size < 1:
        raise ValueError("vocabulary size must be >= 1")
    counts = chord_counts(chord_corpus)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty chord corpus")
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    return ChordVocab(ranked[:size])


def write_chord_corpus(path, sequences: Iterable[Sequence[int]]) -> None:
    text = "".join(" ".join(map(str, s)) + "\n" for s in sequences)
    Path(path).write_text(text, encoding="utf-8")


def read_chord_corpus(path) -> list[list[int]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [[int(t) for t in line.split()] for line in lines]


def _analyze_file(path) -> KeyEstimate | None | str:
    try:
        song = read_midi(path)
    except (MidiError, OSError, ValueError) as exc:
        log.info("skipping %s: %s", path, exc)
        return "unreadable"
    return detect_key(histogram(song.events))


def corpus_stats(paths: Iterable, workers: int = 1) -> dict[str, int]:
    """Songs per detected scale type, plus ``undetected`` and ``unreadable``."""
    stats = {t.name.lower(): 0 for t in ScaleType}
    stats.update(undetected=0, unreadable=0)
    paths = list(paths)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_analyze_file, paths, chunksize=64))
    else:
        results = map(_analyze_file, paths)
    for r in results:
        if r == "unreadable":
            stats["unreadable"] += 1
        elif r is None:
            stats["undetected"] += 1
        else:
            stats[r.scale_type.name.lower()] += 1
    return stats


def find_midi_files(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    return sorted(p for p in root.rglob("*") if p.suffix.lower() in (".mid", ".midi"))
