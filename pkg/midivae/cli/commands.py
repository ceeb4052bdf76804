import logging
from argparse import Namespace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..config import VALID_FEATURES
from ..exceptions import CheckpointError, EmptyDataset, StyleMismatch, UnwritablePath
from ..evaluation.classifiers import StyleClassifier, train_style_classifier
from ..evaluation.ensemble import EnsembleClassifier
from ..evaluation.metrics import latent_sweep
from ..evaluation.reports import before_after_report, export_latents, instrument_switch_matrix, reconstruction_table
from ..midi.dataset import discover_styles, encode_corpus, load_cache, save_cache, style_names, summarize
from ..midi.midi_io import MidiDocument, read_midi_file, write_midi_file
from ..midi.roll_codec import SongRecord, StyleLabel, decode_song, encode_song, output_ticks_per_quarter, split_dataset
from ..model.checkpointing import ModelBundle, load_model
from ..model.style_ops import (
    TransferSpec,
    decode_latents,
    generate_song,
    interpolate,
    medley,
    mixture,
    song_latents,
    transfer_song,
)
from ..model.trainer import Trainer
from .run_config import RunConfig
from .toy_corpus import ToyCorpusSpec, make_toy_corpus

logger = logging.getLogger(__name__)

REPORTS_DIRNAME = 'reports'
SWEEP_FILE = 'sweep.csv'
LATENTS_FILE = 'latents.csv'
TOP_SWEEP_DIMS = 5


def _float_format(value: float) -> str:
    return f"{value:.4f}"


def _print_table(title: str, df: pd.DataFrame, index: bool = False):
    print(f"== {title} ==")
    print(df.to_string(index=index, float_format=_float_format))
    print()


def _write_csv(df: pd.DataFrame, path: Path, index: bool = False) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=index)
    except OSError as exc:
        raise UnwritablePath(f"Cannot write '{path}': {exc}") from exc
    return path


# Data and model access

def load_dataset(rc: RunConfig) -> Tuple[List[SongRecord], List[SongRecord]]:
    path = rc.dataset_cache_path
    if not path.exists():
        raise EmptyDataset(f"No prepared dataset at '{path}'; run 'midivae prepare' first.")
    return load_cache(path, rc.roll)


def load_bundle(rc: RunConfig, checkpoint: Optional[str] = None) -> ModelBundle:
    path = Path(checkpoint) if checkpoint else rc.checkpoint_path
    if not path.exists():
        raise CheckpointError(f"No checkpoint at '{path}'; run 'midivae train' first.")
    bundle = load_model(path)
    logger.info(f"Loaded {bundle.model.n_parameters} parameters from '{path}'")
    return bundle


def load_or_train_ensemble(rc: RunConfig, train_songs: Sequence[SongRecord], names: Sequence[str]) -> EnsembleClassifier:
    """Reuses <out>/classifiers/<feature>.mvae when present, otherwise trains and stores it."""
    classifiers = []
    for feature in VALID_FEATURES:
        path = rc.classifier_dir / f"{feature}.mvae"
        if path.exists():
            logger.info(f"Loading '{feature}' classifier from '{path}'")
            classifiers.append(StyleClassifier.load(path))
            continue
        logger.info(f"Training '{feature}' classifier")
        clf = train_style_classifier(feature, train_songs, rc.hp, rc.roll, style_names=names)
        clf.save(path)
        classifiers.append(clf)
    ensemble = EnsembleClassifier(classifiers)
    if list(ensemble.style_names) != list(names):
        raise StyleMismatch(
            f"Classifiers in '{rc.classifier_dir}' were trained on {ensemble.style_names}, the model on {list(names)}."
        )
    return ensemble


def resolve_style(value: str, names: Sequence[str]) -> int:
    """A style given by name or by index."""
    if value in names:
        return list(names).index(value)
    if value.isdigit() and int(value) < len(names):
        return int(value)
    raise StyleMismatch(f"Style '{value}' is not one of the checkpoint's styles {list(names)}.")


def read_song(path: str, bundle: ModelBundle, style: int = 0) -> Tuple[SongRecord, MidiDocument]:
    doc = read_midi_file(path)
    name = bundle.style_names[style] if bundle.style_names else f"style_{style}"
    song = encode_song(doc, StyleLabel(style, name), bundle.model.cfg, song_id=Path(path).name, source_path=str(path))
    return song, doc


def write_song(path: str, song: SongRecord, bundle: ModelBundle, like: Optional[MidiDocument] = None) -> Path:
    if like is not None:
        doc = decode_song(
            song, bundle.model.cfg, tempo_bpm=like.tempo_bpm,
            ticks_per_quarter=output_ticks_per_quarter(like.ticks_per_quarter),
        )
    else:
        doc = decode_song(song, bundle.model.cfg)
    try:
        written = write_midi_file(path, doc)
    except OSError as exc:
        raise UnwritablePath(f"Cannot write '{path}': {exc}") from exc
    print(f"Wrote {len(song)} bars to '{written}'")
    return written


# Commands

def cmd_make_toy(rc: RunConfig, args: Namespace) -> int:
    root = Path(args.root) if args.root else (rc.dataset_root or rc.output_dir / 'toy')
    spec = ToyCorpusSpec(songs_per_style=args.songs_per_style, bars_per_song=args.bars_per_song, seed=rc.seed)
    try:
        paths = make_toy_corpus(spec, root)
    except OSError as exc:
        raise UnwritablePath(f"Cannot write the toy corpus under '{root}': {exc}") from exc
    print(f"Wrote {len(paths)} songs to '{root}'")
    return 0


def cmd_prepare(rc: RunConfig, args: Namespace) -> int:
    root = rc.require_dataset_root()
    styles = list(rc.styles) or discover_styles(root)
    if len(styles) != rc.hp.k:
        raise StyleMismatch(f"Expected {rc.hp.k} styles under '{root}', found {styles}; set 'styles' in the config.")
    songs = encode_corpus(root, styles, rc.roll, workers=rc.workers)
    train_songs, test_songs = split_dataset(songs, rc.split_ratio, rc.seed)
    save_cache(rc.dataset_cache_path, train_songs, test_songs)
    summary = summarize(songs)
    _write_csv(summary, rc.summary_path)
    _print_table('Dataset', summary)
    print(f"train: {len(train_songs)} songs, test: {len(test_songs)} songs, cache: '{rc.dataset_cache_path}'")
    return 0


def cmd_train(rc: RunConfig, args: Namespace) -> int:
    train_songs, test_songs = load_dataset(rc)
    names = style_names(train_songs + test_songs, rc.hp.k)
    result = Trainer(
        train_songs, test_songs, rc.hp, rc.roll,
        metrics_path=rc.metrics_path,
        checkpoint_path=rc.checkpoint_path,
        style_names=names,
        progress=args.progress,
    ).run()
    print(f"best epoch: {result.best_epoch}, test pitch accuracy: {result.best_test_pitch_acc:.4f}")
    print(f"checkpoint: '{result.checkpoint_path}', metrics: '{rc.metrics_path}'")
    return 0


def cmd_eval(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    train_songs, test_songs = load_dataset(rc)
    names = bundle.style_names or style_names(train_songs + test_songs, bundle.model.hp.k)
    data_names = style_names(train_songs + test_songs, bundle.model.hp.k)
    if list(names) != data_names:
        raise StyleMismatch(f"The checkpoint was trained on {list(names)}, the prepared dataset holds {data_names}.")
    ensemble = load_or_train_ensemble(rc, train_songs, names)
    splits = {'train': train_songs, 'test': test_songs}
    reports = rc.output_dir / REPORTS_DIRNAME

    reconstruction = reconstruction_table(bundle.model, splits)
    _print_table('Reconstruction', reconstruction)
    _write_csv(reconstruction, reports / 'reconstruction.csv')

    report = before_after_report(bundle.model, ensemble, splits, k=bundle.model.hp.k)
    _print_table('Style transfer, ensemble', report.ensemble_view())
    _print_table('Style transfer, per classifier (test)', report.classifier_view('test'))
    _write_csv(report.table, reports / 'transfer.csv')

    songs = train_songs + test_songs
    for spec in (TransferSpec(0, 1, bundle.model.hp.k), TransferSpec(1, 0, bundle.model.hp.k)):
        switch = instrument_switch_matrix(bundle.model, songs, spec)
        title = f"Instrument families, {names[spec.source_style]} -> {names[spec.target_style]}"
        print(f"== {title} ==")
        print(switch.to_text())
        print()
        _write_csv(switch.matrix, reports / f"switch_{spec.source_style}_to_{spec.target_style}.csv", index=True)
    return 0


def cmd_transfer(rc: RunConfig, args: Namespace) -> int:
    if args.source == args.target:
        raise StyleMismatch(f"Source and target style are both '{args.source}'.")
    bundle = load_bundle(rc, args.checkpoint)
    source = resolve_style(args.source, bundle.style_names)
    target = resolve_style(args.target, bundle.style_names)
    song, doc = read_song(args.input, bundle, source)
    transferred = transfer_song(song, TransferSpec(source, target, bundle.model.hp.k), bundle.model, bundle.style_names)
    write_song(args.output, transferred, bundle, like=doc)
    return 0


def cmd_interpolate(rc: RunConfig, args: Namespace) -> int:
    """Walks from the first bar of A to the first bar of B in 'steps' bars."""
    bundle = load_bundle(rc, args.checkpoint)
    song_a, doc = read_song(args.input_a, bundle)
    song_b, _ = read_song(args.input_b, bundle)
    path = interpolate(song_latents(song_a, bundle.model)[0], song_latents(song_b, bundle.model)[0], args.steps)
    song = decode_latents(bundle.model, np.stack(path), song_a.style, song_id='interpolation')
    write_song(args.output, song, bundle, like=doc)
    return 0


def cmd_medley(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    song_a, doc = read_song(args.input_a, bundle)
    song_b, _ = read_song(args.input_b, bundle)
    write_song(args.output, medley(song_a, song_b, args.bridge_bars, bundle.model), bundle, like=doc)
    return 0


def cmd_mix(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    song_a, doc = read_song(args.input_a, bundle)
    song_b, _ = read_song(args.input_b, bundle)
    write_song(args.output, mixture(song_a, song_b, args.alpha, bundle.model), bundle, like=doc)
    return 0


def cmd_sample(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    if bundle.stats is None:
        raise CheckpointError("The checkpoint carries no latent statistics to sample from.")
    style = resolve_style(args.style, bundle.style_names) if args.style is not None else None
    rng = np.random.default_rng([rc.seed, 6])
    song = generate_song(bundle.model, bundle.stats, args.bars, rng, style=style, style_names=bundle.style_names)
    write_song(args.output, song, bundle)
    return 0


def cmd_sweep(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    if bundle.stats is None:
        raise CheckpointError("The checkpoint carries no latent statistics; the sweep needs sigma_hat.")
    train_songs, test_songs = load_dataset(rc)
    ensemble = load_or_train_ensemble(rc, train_songs, bundle.style_names or style_names(train_songs, bundle.model.hp.k))
    latents = np.concatenate(bundle.model.encode_songs([song for song in test_songs if len(song)]))
    rng = np.random.default_rng([rc.seed, 5])
    rows = rng.choice(len(latents), size=min(args.samples, len(latents)), replace=False)
    table = latent_sweep(bundle.model, latents[np.sort(rows)], ensemble, bundle.stats.sigma_hat)
    path = _write_csv(table, Path(args.output) if args.output else rc.output_dir / SWEEP_FILE, index=True)
    top = table['style_probability'].abs().sort_values(ascending=False).head(TOP_SWEEP_DIMS)
    _print_table('Dimensions most correlated with the style probability', top.to_frame(), index=True)
    print(f"sweep table: '{path}'")
    return 0


def cmd_export_latents(rc: RunConfig, args: Namespace) -> int:
    bundle = load_bundle(rc, args.checkpoint)
    train_songs, test_songs = load_dataset(rc)
    ensemble = load_or_train_ensemble(rc, train_songs, bundle.style_names or style_names(train_songs, bundle.model.hp.k))
    path = export_latents(bundle.model, train_songs + test_songs, ensemble, args.output or rc.output_dir / LATENTS_FILE)
    print(f"latents: '{path}'")
    return 0


COMMANDS = {
    'make-toy': cmd_make_toy,
    'prepare': cmd_prepare,
    'train': cmd_train,
    'eval': cmd_eval,
    'transfer': cmd_transfer,
    'interpolate': cmd_interpolate,
    'medley': cmd_medley,
    'mix': cmd_mix,
    'sample': cmd_sample,
    'sweep': cmd_sweep,
    'export-latents': cmd_export_latents,
}
