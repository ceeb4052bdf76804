from typing import Dict, Sequence

import numpy as np

from ..config import VALID_FEATURES
from ..exceptions import StyleMismatch
from ..midi.roll_codec import BarSample, SongRecord
from ..model.vae import BarBatch
from .classifiers import StyleClassifier, songs_batch


def majority_vote(votes: np.ndarray, mean_probs: np.ndarray) -> np.ndarray:
    """
    Row-wise majority of integer votes (B x voters). Ties go to the tied style with the
    highest mean probability (B x k).
    """
    k = mean_probs.shape[-1]
    counts = np.stack([np.sum(votes == style, axis=-1) for style in range(k)], axis=-1)
    tied = counts == counts.max(axis=-1, keepdims=True)
    return np.argmax(np.where(tied, mean_probs, -np.inf), axis=-1)


class EnsembleClassifier:
    """
    Voting ensemble of the pitch, velocity and instrument style classifiers.

    * Main use case:

    >>> ensemble = EnsembleClassifier(train_classifiers(train_songs, hp, cfg))
    >>> ensemble.predict(songs_batch(test_songs))

    Parameters
    ----------------
    classifiers: list of StyleClassifier
        One per feature, all trained on the same style set.
        Field is required.
    """

    def __init__(self, classifiers: Sequence[StyleClassifier]):
        by_feature = {clf.feature: clf for clf in classifiers}
        if sorted(by_feature) != sorted(VALID_FEATURES) or len(classifiers) != len(VALID_FEATURES):
            raise StyleMismatch(f"The ensemble needs exactly one classifier per feature {VALID_FEATURES}.")
        ks = {clf.k for clf in classifiers}
        names = {tuple(clf.style_names) for clf in classifiers}
        if len(ks) != 1 or len(names) != 1:
            raise StyleMismatch("Ensemble members were trained on different style sets.")
        self.classifiers: Dict[str, StyleClassifier] = {feature: by_feature[feature] for feature in VALID_FEATURES}
        self.k = ks.pop()
        self.style_names = list(names.pop())

    def probabilities(self, batch: BarBatch) -> Dict[str, np.ndarray]:
        return {feature: clf.predict_proba(batch) for feature, clf in self.classifiers.items()}

    def mean_probability(self, batch: BarBatch) -> np.ndarray:
        return np.mean(np.stack(list(self.probabilities(batch).values())), axis=0)

    def votes(self, batch: BarBatch) -> np.ndarray:
        return np.stack([np.argmax(p, axis=-1) for p in self.probabilities(batch).values()], axis=-1)

    def predict(self, batch: BarBatch) -> np.ndarray:
        probabilities = self.probabilities(batch)
        votes = np.stack([np.argmax(p, axis=-1) for p in probabilities.values()], axis=-1)
        return majority_vote(votes, np.mean(np.stack(list(probabilities.values())), axis=0))


def ensemble_predict(bar: BarSample, instruments: Sequence[int], ensemble: EnsembleClassifier) -> int:
    batch = BarBatch.from_bars([bar], [instruments], [0])
    return int(ensemble.predict(batch)[0])


def song_style_score(song: SongRecord, ensemble: EnsembleClassifier) -> float:
    """Fraction of the song's bars the ensemble assigns to song.style."""
    predictions = ensemble.predict(songs_batch([song]))
    return float(np.mean(predictions == song.style.index))
