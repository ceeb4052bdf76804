import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config import ACCURACY, ENSEMBLE, GM_FAMILIES, GM_FAMILY_SIZE, PROBABILITY, VALID_FEATURES
from ..exceptions import EmptyDataset, UnwritablePath
from ..midi.roll_codec import SongRecord
from ..model.style_ops import TransferSpec, transfer_song
from ..model.vae import MidiVae
from .classifiers import songs_batch
from .ensemble import EnsembleClassifier

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['split', 'classifier', 'metric', 'before', 'after', 'diff']
RECONSTRUCTION_COLUMNS = ['split', 'pitch_acc', 'instrument_acc', 'style_acc', 'velocity_mse']

Transfer = Callable[[SongRecord, TransferSpec], SongRecord]


def _model_transfer(model: MidiVae) -> Transfer:
    return lambda song, spec: transfer_song(song, spec, model)


def reconstruction_table(model: MidiVae, splits: Dict[str, Sequence[SongRecord]]) -> pd.DataFrame:
    """Pitch/instrument/style accuracy and velocity MSE per split."""
    rows = [{'split': split, **model.reconstruction_metrics(songs)} for split, songs in splits.items() if songs]
    return pd.DataFrame(rows, columns=RECONSTRUCTION_COLUMNS)


def _source_scores(song: SongRecord, source: int, ensemble: EnsembleClassifier) -> Dict[tuple, float]:
    """Accuracy and mean probability of the source style, per classifier and for the ensemble."""
    batch = songs_batch([song])
    probabilities = ensemble.probabilities(batch)
    scores = {}
    for feature, p in probabilities.items():
        scores[(feature, ACCURACY)] = float(np.mean(np.argmax(p, axis=-1) == source))
        scores[(feature, PROBABILITY)] = float(np.mean(p[:, source]))
    mean = np.mean(np.stack(list(probabilities.values())), axis=0)
    scores[(ENSEMBLE, ACCURACY)] = float(np.mean(ensemble.predict(batch) == source))
    scores[(ENSEMBLE, PROBABILITY)] = float(np.mean(mean[:, source]))
    return scores


@dataclass(eq=False)
class TransferReport:
    """
    Source-style scores before and after transfer, one row per (split, classifier, metric);
    diff = before - after.
    """
    table: pd.DataFrame

    def ensemble_view(self) -> pd.DataFrame:
        return self.table[self.table['classifier'] == ENSEMBLE].reset_index(drop=True)

    def classifier_view(self, split: str = 'test', metric: str = ACCURACY) -> pd.DataFrame:
        table = self.table
        view = table[(table['split'] == split) & (table['metric'] == metric) & (table['classifier'] != ENSEMBLE)]
        return view.reset_index(drop=True)

    def diff(self, split: str, classifier: str = ENSEMBLE, metric: str = PROBABILITY) -> float:
        table = self.table
        row = table[(table['split'] == split) & (table['classifier'] == classifier) & (table['metric'] == metric)]
        return float(row['diff'].iloc[0])

    def to_text(self) -> str:
        return self.table.to_string(index=False, float_format=lambda value: f"{value:.4f}")


def before_after_report(
    model: Optional[MidiVae],
    ensemble: EnsembleClassifier,
    splits: Dict[str, Sequence[SongRecord]],
    k: int = 2,
    transfer: Optional[Transfer] = None,
) -> TransferReport:
    """
    Every song of style i is transferred to every other style j; the source-style score of the
    original song and of the transferred song are averaged over songs, per split.

    Parameters
    ----------------
    model: MidiVae
        Field is required unless 'transfer' is given.
    ensemble: EnsembleClassifier
        Field is required.
    splits: dict
        Split name to songs.
        Field is required.
    k: int
        Field is not required. Default: 2.
    transfer: function
        (song, TransferSpec) -> SongRecord.
        Field is not required. Default: transfer_song with 'model'.
    """
    transfer = transfer if transfer is not None else _model_transfer(model)
    rows = []
    for split, songs in splits.items():
        before: Dict[tuple, List[float]] = {}
        after: Dict[tuple, List[float]] = {}
        for song in songs:
            if len(song) == 0:
                continue
            source = song.style.index
            original = _source_scores(song, source, ensemble)
            for target in range(k):
                if target == source:
                    continue
                changed = _source_scores(transfer(song, TransferSpec(source, target, k)), source, ensemble)
                for key in original:
                    before.setdefault(key, []).append(original[key])
                    after.setdefault(key, []).append(changed[key])
        if not before:
            logger.warning(f"No songs to evaluate in split '{split}'")
            continue
        for classifier in VALID_FEATURES + [ENSEMBLE]:
            for metric in (ACCURACY, PROBABILITY):
                b = float(np.mean(before[(classifier, metric)]))
                a = float(np.mean(after[(classifier, metric)]))
                rows.append({'split': split, 'classifier': classifier, 'metric': metric, 'before': b, 'after': a, 'diff': b - a})
    return TransferReport(pd.DataFrame(rows, columns=REPORT_COLUMNS))


@dataclass(eq=False)
class SwitchMatrix:
    """Row-stochastic GM-family transition matrix; 'observed' flags rows backed by at least one track."""
    matrix: pd.DataFrame
    observed: pd.Series

    def to_text(self) -> str:
        shown = self.matrix.copy()
        shown.insert(0, 'observed', self.observed)
        return shown.to_string(float_format=lambda value: f"{value:.2f}")


def gm_family(program: int) -> int:
    return int(program) // GM_FAMILY_SIZE


def instrument_switch_matrix(
    model: Optional[MidiVae],
    songs: Sequence[SongRecord],
    spec: TransferSpec,
    transfer: Optional[Transfer] = None,
) -> SwitchMatrix:
    """
    Counts, over every track of every song of the source style, the GM family before and after
    transfer, and normalizes each row.
    """
    transfer = transfer if transfer is not None else _model_transfer(model)
    n = len(GM_FAMILIES)
    counts = np.zeros((n, n))
    for song in songs:
        if song.style.index != spec.source_style or len(song) == 0:
            continue
        changed = transfer(song, spec)
        for before, after in zip(song.instruments, changed.instruments):
            counts[gm_family(before), gm_family(after)] += 1
    totals = counts.sum(axis=1, keepdims=True)
    matrix = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return SwitchMatrix(
        matrix=pd.DataFrame(matrix, index=GM_FAMILIES, columns=GM_FAMILIES),
        observed=pd.Series(totals[:, 0] > 0, index=GM_FAMILIES, name='observed'),
    )


def export_latents(
    model: MidiVae,
    songs: Sequence[SongRecord],
    ensemble: EnsembleClassifier,
    path: Union[str, Path],
) -> Path:
    """
    One row per bar: song_id, bar_index, style, the ensemble's probability of the song's own
    style, then z_0 .. z_{latent_dim-1} (mu_z encoded with carryover).
    """
    if not songs:
        raise EmptyDataset("No songs to export.")
    latents = model.encode_songs(songs)
    frames = []
    for song, z in zip(songs, latents):
        probability = ensemble.mean_probability(songs_batch([song]))[:, song.style.index]
        frame = pd.DataFrame(z.astype(np.float64), columns=[f"z_{i}" for i in range(z.shape[1])])
        frame.insert(0, 'source_probability', probability)
        frame.insert(0, 'style', song.style.index)
        frame.insert(0, 'bar_index', [bar.bar_index for bar in song.bars])
        frame.insert(0, 'song_id', song.song_id)
        frames.append(frame)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    except OSError as exc:
        raise UnwritablePath(f"Cannot write latents to '{path}': {exc}") from exc
    return path
