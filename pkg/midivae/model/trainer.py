import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..exceptions import DegenerateStats, EmptyDataset, EmptyStyle, TrainingDiverged
from ..midi.roll_codec import RollConfig, SongRecord
from ..nn.optim import adam_step
from ..nn.params import FLOAT32
from .checkpointing import save_model
from .hyperparams import HyperParams
from .style_ops import LatentStats, empirical_latent_stats
from .training_default_callbacks import _on_batch_end, _on_epoch_end, _on_stop
from .vae import BarBatch, MidiVae, StepResult

logger = logging.getLogger(__name__)

METRIC_NAMES = [
    'total', 'pitch_ce', 'instrument_ce', 'velocity_mse', 'style_ce', 'kl',
    'pitch_acc', 'instrument_acc', 'style_acc',
]
METRIC_COLUMNS = ['epoch'] + [f"{split}_{name}" for split in ('train', 'test') for name in METRIC_NAMES]


def iterate_slots(songs: Sequence[SongRecord], order: Sequence[int], batch_size: int) -> Iterator[Tuple[np.ndarray, List[int], List[int], List[int]]]:
    """
    Deals songs to 'batch_size' slots in 'order'; each slot plays its song bar by bar and takes
    the next song when done. Yields (active slots, song index per slot, bar index per slot,
    slots that just started a song).
    """
    queue = deque(index for index in order if len(songs[index]) > 0)
    slots: List[Optional[List[int]]] = [None] * batch_size
    while True:
        started = []
        for slot in range(batch_size):
            if slots[slot] is None and queue:
                slots[slot] = [queue.popleft(), 0]
                started.append(slot)
        active = [slot for slot in range(batch_size) if slots[slot] is not None]
        if not active:
            return
        yield np.array(active), [slots[s][0] for s in active], [slots[s][1] for s in active], started
        for slot in active:
            slots[slot][1] += 1
            if slots[slot][1] >= len(songs[slots[slot][0]]):
                slots[slot] = None


class _MetricAccumulator:
    def __init__(self, cfg: RollConfig, k: int):
        self.cfg = cfg
        self.k = k
        self.sums: Dict[str, float] = {name: 0.0 for name in METRIC_NAMES}
        self.bars = 0
        self.frames = 0
        self.tracks = 0

    def add(self, batch: BarBatch, result: StepResult):
        n = len(batch)
        for name, value in result.losses.to_dict().items():
            self.sums[name] += value * n
        self.sums['pitch_acc'] += float(np.sum(result.output.pitch_symbols(self.cfg) == batch.pitch))
        self.sums['instrument_acc'] += float(np.sum(result.output.programs() == batch.instruments))
        self.sums['style_acc'] += float(np.sum(np.argmax(result.z[:, :self.k], axis=-1) == batch.style))
        self.bars += n
        self.frames += batch.pitch.size
        self.tracks += batch.instruments.size

    def result(self) -> Dict[str, float]:
        out = {name: self.sums[name] / max(self.bars, 1) for name in METRIC_NAMES[:6]}
        out['pitch_acc'] = self.sums['pitch_acc'] / max(self.frames, 1)
        out['instrument_acc'] = self.sums['instrument_acc'] / max(self.tracks, 1)
        out['style_acc'] = self.sums['style_acc'] / max(self.bars, 1)
        return out


@dataclass(eq=False)
class TrainingResult:
    model: MidiVae
    history: pd.DataFrame
    best_epoch: int
    best_test_pitch_acc: float
    stats: Optional[LatentStats]
    checkpoint_path: Optional[Path] = None


class Trainer:
    """
    Trains a MidiVae with state carryover between consecutive bars of a song and early
    stopping on the test pitch accuracy.

    * Main use case:

    >>> trainer = Trainer(train_songs, test_songs, HyperParams(), RollConfig(), metrics_path='run/metrics.csv')
    >>> result = trainer.run()
    >>> result.history.tail()

    Parameters
    ----------------
    train_songs: list of SongRecord
        Must contain at least one song per style.
        Field is required.
    test_songs: list of SongRecord
        Field is required.
    hp: HyperParams
        Field is required.
    cfg: RollConfig
        Field is required.
    metrics_path: str or Path
        Comma-separated per-epoch log, rewritten at the start of the run.
        Field is not required. Default: None.
    checkpoint_path: str or Path
        Best model plus latent statistics are written here at the end.
        Field is not required. Default: None.
    style_names: list of str
        Stored in the checkpoint.
        Field is not required. Default: None.
    on_batch_end: function
        Called with (epoch, step, LossBreakdown).
        Field is not required. Default: logs at DEBUG level.
    on_epoch_end: function
        Called with (epoch, metrics row).
        Field is not required. Default: logs at INFO level.
    on_stop: function
        Called with (epoch, reason).
        Field is not required. Default: logs at INFO level.
    progress: bool
        Show a tqdm progress bar over epochs.
        Field is not required. Default: False.
    """

    def __init__(
        self,
        train_songs: Sequence[SongRecord],
        test_songs: Sequence[SongRecord],
        hp: HyperParams,
        cfg: RollConfig,
        metrics_path: Optional[Union[str, Path]] = None,
        checkpoint_path: Optional[Union[str, Path]] = None,
        style_names: Optional[Sequence[str]] = None,
        on_batch_end: Callable = _on_batch_end,
        on_epoch_end: Callable = _on_epoch_end,
        on_stop: Callable = _on_stop,
        progress: bool = False,
        dtype=FLOAT32,
    ):
        if not train_songs or not any(len(song) for song in train_songs):
            raise EmptyDataset("The training set has no bars.")
        if not test_songs or not any(len(song) for song in test_songs):
            raise EmptyDataset("The test set has no bars.")
        present = {song.style.index for song in train_songs}
        missing = [style for style in range(hp.k) if style not in present]
        if missing:
            raise EmptyStyle(f"The training set has no song of style(s) {missing}.")

        self.train_songs = list(train_songs)
        self.test_songs = list(test_songs)
        self.hp = hp
        self.cfg = cfg
        self.metrics_path = Path(metrics_path) if metrics_path is not None else None
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path is not None else None
        self.style_names = list(style_names) if style_names else None
        self.on_batch_end = on_batch_end
        self.on_epoch_end = on_epoch_end
        self.on_stop = on_stop
        self.progress = progress
        self.model = MidiVae(hp, cfg, dtype=dtype)
        self.rng = np.random.default_rng([hp.seed, 1])

    def train_epoch(self, epoch: int) -> Dict[str, float]:
        model = self.model
        order = self.rng.permutation(len(self.train_songs))
        carry = model.fresh_state(self.hp.batch_size)
        metrics = _MetricAccumulator(self.cfg, self.hp.k)
        for step, (rows, song_indices, bar_indices, started) in enumerate(
            iterate_slots(self.train_songs, order, self.hp.batch_size)
        ):
            carry.reset(started)
            batch = BarBatch.from_song_bars([self.train_songs[i] for i in song_indices], bar_indices)
            result = model.forward_backward(batch, carry.take(rows), self.rng)
            if not np.isfinite(result.losses.total):
                raise TrainingDiverged(f"Non-finite loss at epoch {epoch}, step {step}: {result.losses.to_dict()}")
            adam_step(model.store, result.grads, self.hp.lr)
            carry.put(rows, result.carry)
            metrics.add(batch, result)
            self.on_batch_end(epoch, step, result.losses)
        return metrics.result()

    def evaluate(self, songs: Sequence[SongRecord]) -> Dict[str, float]:
        """Loss and accuracies with carryover; the noise draw is reseeded so every call is repeatable."""
        model = self.model
        rng = np.random.default_rng([self.hp.seed, 2])
        carry = model.fresh_state(self.hp.batch_size)
        metrics = _MetricAccumulator(self.cfg, self.hp.k)
        for rows, song_indices, bar_indices, started in iterate_slots(songs, range(len(songs)), self.hp.batch_size):
            carry.reset(started)
            batch = BarBatch.from_song_bars([songs[i] for i in song_indices], bar_indices)
            result = model.forward(batch, carry.take(rows), rng)
            carry.put(rows, result.carry)
            metrics.add(batch, result)
        return metrics.result()

    def _log_row(self, row: dict):
        if self.metrics_path is None:
            return
        pd.DataFrame([row], columns=METRIC_COLUMNS).to_csv(
            self.metrics_path, mode='a', header=not self.metrics_path.exists(), index=False
        )

    def run(self) -> TrainingResult:
        hp = self.hp
        if self.metrics_path is not None:
            self.metrics_path.parent.mkdir(parents=True, exist_ok=True)
            if self.metrics_path.exists():
                self.metrics_path.unlink()

        logger.info(
            f"Training {self.model.n_parameters} parameters on {len(self.train_songs)} songs "
            f"({sum(len(s) for s in self.train_songs)} bars), testing on {len(self.test_songs)} songs"
        )
        rows = []
        best_epoch = 0
        best_accuracy = -1.0
        best_params = self.model.store.copy()
        reason = f"reached {hp.epochs} epochs"
        epoch = 0
        for epoch in tqdm(range(1, hp.epochs + 1), disable=not self.progress, desc='epochs'):
            train_metrics = self.train_epoch(epoch)
            test_metrics = self.evaluate(self.test_songs)
            row = {'epoch': epoch}
            row.update({f"train_{name}": train_metrics[name] for name in METRIC_NAMES})
            row.update({f"test_{name}": test_metrics[name] for name in METRIC_NAMES})
            rows.append(row)
            self._log_row(row)
            self.on_epoch_end(epoch, row)

            if test_metrics['pitch_acc'] > best_accuracy:
                best_accuracy = test_metrics['pitch_acc']
                best_epoch = epoch
                best_params = self.model.store.copy()
            elif epoch - best_epoch >= hp.patience:
                reason = f"test pitch accuracy did not improve for {hp.patience} epochs"
                break

        self.on_stop(epoch, reason)
        self.model.store.load(best_params.values())
        try:
            stats = empirical_latent_stats(self.train_songs, self.model)
        except DegenerateStats as exc:
            logger.warning(f"Saving without latent statistics, sampling will be unavailable: {exc}")
            stats = None
        path = None
        if self.checkpoint_path is not None:
            path = save_model(self.checkpoint_path, self.model, stats, self.style_names)
            logger.info(f"Saved checkpoint of epoch {best_epoch} to '{path}'")
        return TrainingResult(
            model=self.model,
            history=pd.DataFrame(rows, columns=METRIC_COLUMNS),
            best_epoch=best_epoch,
            best_test_pitch_acc=best_accuracy,
            stats=stats,
            checkpoint_path=path,
        )


def train(
    train_songs: Sequence[SongRecord],
    test_songs: Sequence[SongRecord],
    hp: HyperParams,
    cfg: RollConfig,
    **kwargs,
) -> TrainingResult:
    """Shortcut for Trainer(...).run(); keyword arguments go to Trainer."""
    return Trainer(train_songs, test_songs, hp, cfg, **kwargs).run()
