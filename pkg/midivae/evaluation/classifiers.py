import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import INSTRUMENT, KIND_STYLE_CLASSIFIER, PITCH, VALID_FEATURES, VELOCITY
from ..exceptions import CheckpointError, EmptyDataset, EmptyStyle, InvalidParameter
from ..midi.roll_codec import RollConfig, SongRecord
from ..model.hyperparams import HyperParams
from ..model.vae import BarBatch, feature_input
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.functional import softmax, softmax_cross_entropy
from ..nn.layers import LINEAR, Dense, GRUStack
from ..nn.optim import adam_step
from ..nn.params import FLOAT32, ParamStore

logger = logging.getLogger(__name__)


class StyleClassifier:
    """
    Bar-level style classifier reading a single feature roll, independent of any MidiVae.

    * Main use case:

    >>> clf = train_style_classifier('pitch', train_songs, hp, cfg)
    >>> clf.predict_proba(BarBatch.from_song_bars(songs, [0] * len(songs)))

    Parameters
    ----------------
    feature: str
        Input roll.
        Options: 'pitch', 'velocity', 'instrument'.
        Field is required.
    cfg: RollConfig
        Field is required.
    k: int
        Number of styles.
        Field is required.
    n_hidden: int
        Field is not required. Default: 256.
    n_layers: int
        Field is not required. Default: 2.
    """

    def __init__(
        self,
        feature: str,
        cfg: RollConfig,
        k: int,
        n_hidden: int = 256,
        n_layers: int = 2,
        dtype=FLOAT32,
        rng: Optional[np.random.Generator] = None,
        style_names: Optional[Sequence[str]] = None,
    ):
        if feature not in VALID_FEATURES:
            raise InvalidParameter(f"Must provide a valid 'feature' parameter. Valid options are: {VALID_FEATURES}")
        if k < 2:
            raise InvalidParameter(f"'k' must be >= 2. Input value: {k}.")
        self.feature = feature
        self.cfg = cfg
        self.k = k
        self.n_hidden = n_hidden
        self.n_layers = n_layers
        self.style_names = list(style_names) if style_names else [f"style_{i}" for i in range(k)]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.store = ParamStore(dtype=dtype)
        n_in = {
            PITCH: cfg.vocab_size + cfg.n_tracks,
            VELOCITY: 1 + cfg.n_tracks,
            INSTRUMENT: cfg.n_instruments,
        }[feature]
        self.gru = GRUStack(self.store, f"classifier.{feature}", n_in, n_hidden, n_layers, rng)
        self.head = Dense(self.store, f"classifier.{feature}.head", n_hidden, k, rng, LINEAR)

    def _forward(self, batch: BarBatch):
        X = feature_input(batch, self.cfg, self.feature, self.store.dtype)
        _, finals, caches = self.gru.forward(X, self.gru.zero_state(len(batch), self.store.dtype))
        logits, head_cache = self.head.forward(finals[-1])
        return logits, (caches, head_cache)

    def predict_proba(self, batch: BarBatch) -> np.ndarray:
        logits, _ = self._forward(batch)
        return softmax(logits)

    def predict(self, batch: BarBatch) -> np.ndarray:
        return np.argmax(self.predict_proba(batch), axis=-1)

    def forward_backward(self, batch: BarBatch) -> Tuple[float, Dict[str, np.ndarray]]:
        logits, (caches, head_cache) = self._forward(batch)
        loss, _, dlogits = softmax_cross_entropy(logits, batch.style)
        grads = self.store.zeros_like()
        dfinal = self.head.backward(dlogits, head_cache, grads)
        dfinals = [None] * self.n_layers
        dfinals[-1] = dfinal
        self.gru.backward(None, caches, grads, dfinals)
        return loss, grads

    def accuracy(self, songs: Sequence[SongRecord]) -> float:
        batch = songs_batch(songs)
        return float(np.mean(self.predict(batch) == batch.style))

    def save(self, path: Union[str, Path]) -> Path:
        meta = {
            'kind': KIND_STYLE_CLASSIFIER,
            'feature': self.feature,
            'k': self.k,
            'n_hidden': self.n_hidden,
            'n_layers': self.n_layers,
            'roll_config': asdict(self.cfg),
            'style_names': self.style_names,
        }
        return save_checkpoint(path, {name: value for name, value in self.store.items()}, meta)

    @classmethod
    def load(cls, path: Union[str, Path], dtype=FLOAT32) -> 'StyleClassifier':
        tensors, meta = load_checkpoint(path)
        if meta.get('kind') != KIND_STYLE_CLASSIFIER:
            raise CheckpointError(f"'{path}' holds a '{meta.get('kind')}' checkpoint, expected '{KIND_STYLE_CLASSIFIER}'.")
        clf = cls(
            meta['feature'], RollConfig(**meta['roll_config']), int(meta['k']),
            n_hidden=int(meta['n_hidden']), n_layers=int(meta['n_layers']), dtype=dtype,
            style_names=meta.get('style_names'),
        )
        clf.store.load(tensors, strict=True)
        return clf


def songs_batch(songs: Sequence[SongRecord]) -> BarBatch:
    """Every bar of every song as one batch, in song order."""
    bars = [bar for song in songs for bar in song.bars]
    if not bars:
        raise EmptyDataset("No bars to classify.")
    return BarBatch.from_bars(
        bars,
        [song.instruments for song in songs for _ in song.bars],
        [song.style.index for song in songs for _ in song.bars],
    )


def train_style_classifier(
    feature: str,
    songs: Sequence[SongRecord],
    hp: HyperParams,
    cfg: RollConfig,
    style_names: Optional[Sequence[str]] = None,
    dtype=FLOAT32,
) -> StyleClassifier:
    """
    Trains a classifier on single bars with cross-entropy against the song's style label.

    Parameters
    ----------------
    feature: str
        Options: 'pitch', 'velocity', 'instrument'.
        Field is required.
    songs: list of SongRecord
        Needs at least one song of each of the hp.k styles.
        Field is required.
    hp: HyperParams
        Uses classifier_state, classifier_layers, classifier_epochs, classifier_batch_size,
        classifier_lr, k and seed.
        Field is required.
    cfg: RollConfig
        Field is required.
    """
    if feature not in VALID_FEATURES:
        raise InvalidParameter(f"Must provide a valid 'feature' parameter. Valid options are: {VALID_FEATURES}")
    present = sorted({song.style.index for song in songs if len(song)})
    missing = [style for style in range(hp.k) if style not in present]
    if missing:
        raise EmptyStyle(f"Cannot train a '{feature}' classifier: no bars of style(s) {missing}.")

    salt = VALID_FEATURES.index(feature)
    clf = StyleClassifier(
        feature, cfg, hp.k, hp.classifier_state, hp.classifier_layers, dtype=dtype,
        rng=np.random.default_rng([hp.seed, 3, salt]), style_names=style_names,
    )
    data = songs_batch(songs)
    rng = np.random.default_rng([hp.seed, 4, salt])
    n = len(data)
    for epoch in range(1, hp.classifier_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hp.classifier_batch_size):
            rows = order[start:start + hp.classifier_batch_size]
            batch = BarBatch(data.pitch[rows], data.velocity[rows], data.instruments[rows], data.style[rows])
            loss, grads = clf.forward_backward(batch)
            adam_step(clf.store, grads, hp.classifier_lr)
            total += loss * len(rows)
        logger.info(f"'{feature}' classifier epoch {epoch}: loss={total / n:.4f}")
    return clf


def train_classifiers(
    songs: Sequence[SongRecord],
    hp: HyperParams,
    cfg: RollConfig,
    style_names: Optional[Sequence[str]] = None,
) -> List[StyleClassifier]:
    return [train_style_classifier(feature, songs, hp, cfg, style_names) for feature in VALID_FEATURES]
