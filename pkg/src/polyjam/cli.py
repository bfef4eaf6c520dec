"""Command-line pipeline: analyze, build-dataset, train-chords, train-poly, generate, export-embeddings.

Every command reads and writes inside one run directory (``--out``)::

    dataset/   chords.txt  dictionary.txt  rolls.npz  index.tsv
    models/    chord_model.ckpt  poly_model.ckpt  dictionary.txt
    generated/ song.mid  roll.txt  chords.txt
    embeddings/ embeddings.csv  neighbors.csv
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import harmony
from .chord_model import ChordModel, ChordTrainConfig, SamplerConfig, generate_chords, train_chord_model
from .embed_viz import nearest_neighbor_report, pca_2d
from .harmony import ChordVocab, ScaleType
from .midi_io import MidiError, read_midi, save_midi
from .pianoroll import N_PITCHES, STEPS_PER_BAR, bpm_to_tempo, roll_to_midi, save_roll, song_roll
from .poly_model import GenerationConfig, PolyModel, PolyTrainConfig, generate_song, train_poly_model

log = logging.getLogger("polyjam")

STAGES = ("build-dataset", "train-chords", "train-poly", "generate-chords", "generate-notes")


@dataclass
class PipelineConfig:
    corpus: str = ""
    out: str = "run"
    seed: int = 0
    vocab_size: int = 50
    embed_dim: int = 10
    chord_hidden: int = 256
    poly_hidden: int = 512
    chord_lr: float = 1e-5
    poly_lr: float = 1e-6
    chord_epochs: int = 4
    poly_epochs: int = 4
    chord_bptt: int = 64
    poly_bptt: int = 128
    chord_songs: int = 80000
    poly_songs: int = 10000
    temperature: float = 1.0
    note_cap: float = 4.0
    bars: int = 16
    seed_bars: int = 4
    seed_song: str = ""
    tempo: float = 120.0
    instrument: int = 0
    workers: int = 1

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and f.name not in ("seed", "instrument", "temperature") and v <= 0:
                raise ValueError(f"config value {f.name} must be positive, got {v}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 <= self.instrument <= 127:
            raise ValueError("instrument must be 0-127")

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def build_config(file_values: dict[str, str], overrides: dict) -> PipelineConfig:
    types = {f.name: f.type for f in fields(PipelineConfig)}
    conv = {"int": int, "float": float, "str": str}
    values = {}
    for key, raw in {**file_values, **{k: v for k, v in overrides.items() if v is not None}}.items():
        if key not in types:
            raise ValueError(f"unknown config key: {key}")
        values[key] = conv[types[key]](raw)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def stage_seed(seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([seed, STAGES.index(stage)]).generate_state(1)[0])


# --- helpers -----------------------------------------------------------------

def _dirs(cfg):
    root = Path(cfg.out)
    return {name: root / name for name in ("dataset", "models", "generated", "embeddings")}


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; {hint}")
    return path


def _load_song(path):
    try:
        return read_midi(path)
    except (MidiError, OSError, ValueError) as exc:
        log.warning("skipping %s: %s", path, exc)
        return None


def _shifted_major_song(song):
    """The song moved to root C if it is in a major/relative-minor key, else None."""
    key = harmony.detect_key(harmony.histogram(song.events))
    if key is None or key.scale_type is not ScaleType.MAJOR_REL_MINOR:
        return None, key
    shift = harmony.shift_to_c(key.root)
    return harmony.transpose_song(song, shift), key


def _load_vocab_and_chord_model(cfg):
    d = _dirs(cfg)
    vocab = ChordVocab.load(_require(d["models"] / "dictionary.txt", "run train-chords first"))
    data = _require(d["models"] / "chord_model.ckpt", "run train-chords first").read_bytes()
    return vocab, ChordModel.loads(data, vocab)


def _load_rolls(cfg):
    ds = _dirs(cfg)["dataset"]
    with np.load(_require(ds / "rolls.npz", "run build-dataset first")) as npz:
        rolls = [np.unpackbits(npz[f"roll_{k}"], axis=1)[:, :N_PITCHES]
                 for k in range(len(npz.files))]
    chords = harmony.read_chord_corpus(ds / "chords.txt")
    return rolls, chords


# --- commands ----------------------------------------------------------------

def cmd_analyze(cfg: PipelineConfig) -> dict:
    """Key statistics, note histogram of the shifted songs and chord frequencies."""
    if not cfg.corpus:
        raise ValueError("analyze needs --corpus")
    paths = harmony.find_midi_files(cfg.corpus)
    stats = harmony.corpus_stats(paths, workers=cfg.workers)
    pitch_counts = np.zeros(128, dtype=np.int64)
    chord_freq = Counter()
    for p in paths:
        song = _load_song(p)
        if song is None:
            continue
        shifted, _ = _shifted_major_song(song)
        if shifted is None:
            continue
        pitch_counts += np.bincount([e.pitch for e in shifted.events], minlength=128)
        chord_freq.update(c for c in harmony.extract_chords(shifted) if c is not None)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    analyzed = sum(stats.values()) - stats["unreadable"]
    lines = [f"files: {len(paths)}", f"analyzed: {analyzed}"]
    for name, n in stats.items():
        frac = n / analyzed if analyzed and name != "unreadable" else 0.0
        lines.append(f"{name}: {n} ({100 * frac:.1f}%)")
    lines.append("top chords (shifted): " + ", ".join(
        harmony.chord_name(c) for c, _ in sorted(chord_freq.items(), key=lambda kv: (-kv[1], kv[0]))[:10]))
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / "key_stats.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale_type", "songs"])
        w.writerows(stats.items())
    with open(out / "note_histogram.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pitch", "count", "in_c_major_scale"])
        major = harmony.scale_pitch_classes(0, ScaleType.MAJOR_REL_MINOR)
        for p, n in enumerate(pitch_counts):
            w.writerow([p, int(n), int(p % 12 in major)])
    with open(out / "chord_frequencies.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chord", "pitch_classes", "count"])
        for c, n in sorted(chord_freq.items(), key=lambda kv: (-kv[1], kv[0])):
            w.writerow([harmony.chord_name(c), ",".join(map(str, c)), n])
    print("\n".join(lines))
    return {"stats": stats, "chord_freq": chord_freq, "pitch_counts": pitch_counts}


def cmd_build_dataset(cfg: PipelineConfig) -> None:
    """Keep major/relative-minor songs, shift them to C, store chords and rolls."""
    if not cfg.corpus:
        raise ValueError("build-dataset needs --corpus")
    ds = _dirs(cfg)["dataset"]
    ds.mkdir(parents=True, exist_ok=True)
    chord_seqs, rolls, index = [], [], []
    for p in harmony.find_midi_files(cfg.corpus):
        song = _load_song(p)
        if song is None or not song.events:
            continue
        shifted, key = _shifted_major_song(song)
        if shifted is None:
            log.info("excluding %s (key %s)", p, key)
            continue
        chords = harmony.extract_chords(shifted)
        roll = song_roll(shifted)
        assert len(roll) == STEPS_PER_BAR * len(chords)
        chord_seqs.append(chords)
        rolls.append(roll)
        index.append((str(p), str(key), harmony.shift_to_c(key.root), len(chords)))
    if not chord_seqs:
        raise ValueError(f"no major/relative-minor songs found under {cfg.corpus}")
    vocab = harmony.build_vocab(chord_seqs, cfg.vocab_size)
    vocab.save(ds / "dictionary.txt")
    harmony.write_chord_corpus(ds / "chords.txt", (vocab.encode_sequence(s) for s in chord_seqs))
    np.savez_compressed(ds / "rolls.npz", **{f"roll_{k}": np.packbits(r, axis=1)
                                              for k, r in enumerate(rolls)})
    with open(ds / "index.tsv", "w", encoding="utf-8") as fh:
        fh.write("song\tpath\tkey\tshift\tbars\n")
        for k, row in enumerate(index):
            fh.write("\t".join(map(str, (k, *row))) + "\n")
    print(f"{len(chord_seqs)} songs, vocabulary {vocab.size} chords (+UNK)")


def cmd_train_chords(cfg: PipelineConfig) -> ChordModel:
    ds, models = _dirs(cfg)["dataset"], _dirs(cfg)["models"]
    vocab = ChordVocab.load(_require(ds / "dictionary.txt", "run build-dataset first"))
    corpus = harmony.read_chord_corpus(ds / "chords.txt")[:cfg.chord_songs]
    seed = stage_seed(cfg.seed, "train-chords")
    model = ChordModel(vocab.n_ids, cfg.embed_dim, cfg.chord_hidden, seed=seed, vocab=vocab)
    train_chord_model(corpus, model, ChordTrainConfig(cfg.chord_lr, cfg.chord_epochs, cfg.chord_bptt,
                                                      seed=seed))
    models.mkdir(parents=True, exist_ok=True)
    (models / "chord_model.ckpt").write_bytes(model.dumps())
    vocab.save(models / "dictionary.txt")
    return model


def cmd_train_poly(cfg: PipelineConfig) -> PolyModel:
    models = _dirs(cfg)["models"]
    _, chord_model = _load_vocab_and_chord_model(cfg)
    rolls, chords = _load_rolls(cfg)
    songs = list(zip(rolls, chords))[:cfg.poly_songs]
    seed = stage_seed(cfg.seed, "train-poly")
    model = PolyModel(N_PITCHES, chord_model.embed_dim, cfg.poly_hidden, seed=seed)
    train_poly_model(songs, chord_model, model,
                     PolyTrainConfig(cfg.poly_lr, cfg.poly_epochs, cfg.poly_bptt, seed=seed))
    models.mkdir(parents=True, exist_ok=True)
    (models / "poly_model.ckpt").write_bytes(model.dumps())
    return model


def _generation_seed(cfg, vocab):
    """(seed roll, seed chord ids) from --seed-song, else the first dataset song, else None."""
    if cfg.seed_song:
        song = read_midi(_require(Path(cfg.seed_song), "check --seed-song"))
        key = harmony.detect_key(harmony.histogram(song.events))
        if key is not None:
            song = harmony.transpose_song(song, harmony.shift_to_c(key.root))
        roll = song_roll(song)
        ids = vocab.encode_sequence(harmony.extract_chords(song))
    else:
        ds = _dirs(cfg)["dataset"]
        if not (ds / "rolls.npz").exists():
            return None, None
        rolls, chords = _load_rolls(cfg)
        roll, ids = rolls[0], chords[0]
    bars = min(cfg.seed_bars, len(ids))
    if bars == 0:
        return None, None
    return roll[:STEPS_PER_BAR * bars], ids[:bars]


def cmd_generate(cfg: PipelineConfig) -> dict:
    d = _dirs(cfg)
    vocab, chord_model = _load_vocab_and_chord_model(cfg)
    poly = PolyModel.loads(_require(d["models"] / "poly_model.ckpt", "run train-poly first").read_bytes())
    seed_roll, seed_ids = _generation_seed(cfg, vocab)
    chord_seed = seed_ids if seed_ids else [0]
    progression = generate_chords(chord_model, chord_seed, cfg.bars,
                                  SamplerConfig(cfg.temperature, stage_seed(cfg.seed, "generate-chords")))
    gen_cfg = GenerationConfig(cfg.note_cap, cfg.temperature, stage_seed(cfg.seed, "generate-notes"), cfg.bars)
    roll = generate_song(poly, progression, chord_model, seed_roll, seed_ids, gen_cfg)
    song = roll_to_midi(roll, bpm_to_tempo(cfg.tempo), cfg.instrument)
    out = d["generated"]
    out.mkdir(parents=True, exist_ok=True)
    save_midi(song, out / "song.mid", cfg.instrument)
    save_roll(roll, out / "roll.txt")
    (out / "chords.txt").write_text(" ".join(vocab.label(i) for i in progression) + "\n", encoding="utf-8")
    print(f"wrote {out / 'song.mid'}: {cfg.bars} bars, chords {' '.join(vocab.label(i) for i in progression)}")
    return {"progression": progression, "roll": roll, "song": song}


def cmd_export_embeddings(cfg: PipelineConfig):
    vocab, model = _load_vocab_and_chord_model(cfg)
    ids = list(range(vocab.size))
    labels = [vocab.label(i) for i in ids]
    vectors = model.embeddings()[ids]
    proj = pca_2d(vectors, labels)
    out = _dirs(cfg)["embeddings"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "embeddings.csv").write_text(proj.to_csv(), encoding="utf-8")
    with open(out / "neighbors.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "nearest", "distance"])
        for lab, (nb, dist) in nearest_neighbor_report(vectors, labels).items():
            w.writerow([lab, nb, repr(dist)])
    return proj


COMMANDS = {
    "analyze": cmd_analyze,
    "build-dataset": cmd_build_dataset,
    "train-chords": cmd_train_chords,
    "train-poly": cmd_train_poly,
    "generate": cmd_generate,
    "export-embeddings": cmd_export_embeddings,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyjam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name in ("analyze", "build-dataset"):
            p.add_argument("--corpus")
            p.add_argument("--workers", type=int)
        if name == "generate":
            p.add_argument("--bars", type=int)
            p.add_argument("--temperature", type=float)
            p.add_argument("--note-cap", dest="note_cap", type=float)
            p.add_argument("--tempo", type=float, help="beats per minute")
            p.add_argument("--instrument", type=int, help="General MIDI program 0-127")
            p.add_argument("--seed-song", dest="seed_song")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = parse_config_text(args.config.read_text(encoding="utf-8")) if args.config else {}
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
        cfg = build_config(file_values, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"effective_config.{args.command}.txt").write_text(cfg.dumps(), encoding="utf-8")
        COMMANDS[args.command](cfg)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        if args.verbose:
            raise
        print(f"polyjam {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
