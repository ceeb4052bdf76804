import numpy as np
import pandas as pd
import pytest

from midivae.config import ACCURACY, ENSEMBLE, GM_FAMILIES, PROBABILITY
from midivae.evaluation.classifiers import StyleClassifier, songs_batch, train_classifiers, train_style_classifier
from midivae.evaluation.ensemble import EnsembleClassifier, ensemble_predict, majority_vote, song_style_score
from midivae.evaluation.metrics import (
    SWEEP_METRIC_NAMES,
    bar_metrics,
    latent_sweep,
    pearson_rows,
    sweep_metric_names,
)
from midivae.evaluation.reports import (
    before_after_report,
    export_latents,
    gm_family,
    instrument_switch_matrix,
    reconstruction_table,
)
from midivae.exceptions import EmptyStyle, InvalidParameter, StyleMismatch
from midivae.midi.roll_codec import SongRecord, StyleLabel
from midivae.model.style_ops import TransferSpec
from midivae.nn.gradcheck import grad_check
from midivae.nn.params import FLOAT64


@pytest.fixture
def ensemble(tiny_songs, tiny_hp, tiny_cfg):
    return EnsembleClassifier(train_classifiers(tiny_songs, tiny_hp, tiny_cfg, style_names=['a', 'b']))


def _keep_song(song, spec):
    return song


def test_majority_vote_breaks_ties_by_probability():
    votes = np.array([[1, 1, 0], [0, 1, 2], [2, 0, 0]])
    mean_probs = np.array([[0.9, 0.05, 0.05], [0.2, 0.3, 0.5], [0.1, 0.1, 0.8]])
    assert majority_vote(votes, mean_probs).tolist() == [1, 2, 0]


def test_classifier_gradients(tiny_cfg, tiny_songs):
    clf = StyleClassifier('velocity', tiny_cfg, 2, n_hidden=4, n_layers=2, dtype=FLOAT64, rng=np.random.default_rng(1))
    batch = songs_batch(tiny_songs[:3])
    assert grad_check(lambda: clf.forward_backward(batch), clf.store.values(), max_per_tensor=4, floor=1e-6) < 1e-4


def test_classifier_validation(tiny_cfg, tiny_hp, tiny_songs):
    with pytest.raises(InvalidParameter):
        StyleClassifier('tempo', tiny_cfg, 2)
    with pytest.raises(InvalidParameter):
        StyleClassifier('pitch', tiny_cfg, 1)
    with pytest.raises(EmptyStyle):
        train_style_classifier('pitch', [song for song in tiny_songs if song.style.index == 1], tiny_hp, tiny_cfg)


def test_classifier_training_is_seeded(tiny_cfg, tiny_hp, tiny_songs):
    a = train_style_classifier('instrument', tiny_songs, tiny_hp, tiny_cfg)
    b = train_style_classifier('instrument', tiny_songs, tiny_hp, tiny_cfg)
    batch = songs_batch(tiny_songs)
    assert np.array_equal(a.predict_proba(batch), b.predict_proba(batch))
    assert 0.0 <= a.accuracy(tiny_songs) <= 1.0


def test_classifier_save_load(tmp_path, tiny_cfg, tiny_hp, tiny_songs):
    clf = train_style_classifier('pitch', tiny_songs, tiny_hp, tiny_cfg, style_names=['a', 'b'])
    loaded = StyleClassifier.load(clf.save(tmp_path / 'pitch.mvae'))
    batch = songs_batch(tiny_songs)
    assert loaded.feature == 'pitch'
    assert loaded.style_names == ['a', 'b']
    assert np.array_equal(loaded.predict_proba(batch), clf.predict_proba(batch))


def test_ensemble_membership_is_checked(tiny_cfg, tiny_hp, tiny_songs):
    classifiers = train_classifiers(tiny_songs, tiny_hp, tiny_cfg)
    with pytest.raises(StyleMismatch):
        EnsembleClassifier(classifiers[:2])
    with pytest.raises(StyleMismatch):
        EnsembleClassifier([classifiers[0], classifiers[0], classifiers[2]])
    renamed = StyleClassifier('pitch', tiny_cfg, 2, n_hidden=4, n_layers=1, style_names=['x', 'y'])
    with pytest.raises(StyleMismatch):
        EnsembleClassifier([renamed, classifiers[1], classifiers[2]])


def test_ensemble_predictions(ensemble, tiny_songs):
    batch = songs_batch(tiny_songs)
    votes = ensemble.votes(batch)
    assert votes.shape == (len(batch), 3)
    assert np.array_equal(ensemble.predict(batch), majority_vote(votes, ensemble.mean_probability(batch)))
    song = tiny_songs[0]
    assert ensemble_predict(song.bars[0], song.instruments, ensemble) == ensemble.predict(songs_batch([song]))[0]
    assert 0.0 <= song_style_score(song, ensemble) <= 1.0


def test_sweep_metric_names():
    assert len(SWEEP_METRIC_NAMES) == 27
    assert SWEEP_METRIC_NAMES[:2] == ['total_onsets', 'total_held']
    assert SWEEP_METRIC_NAMES[-1] == 'style_probability'
    assert 'track3_pitch_range' in SWEEP_METRIC_NAMES
    assert len(sweep_metric_names(2)) == 19


def test_bar_metrics_by_hand(tiny_cfg):
    silence = tiny_cfg.silence_index
    pitch = np.array([[0, silence], [0, 5], [silence, 5], [2, silence]])
    velocity = np.array([[0.9, 0.0], [0.25, 0.8], [0.0, 0.25], [0.6, 0.0]])
    row = dict(zip(sweep_metric_names(2), bar_metrics(pitch, velocity, tiny_cfg, np.array([0.3]))[0]))
    assert row['total_onsets'] == 3
    assert row['total_held'] == 2
    assert row['pitch_mean'] == pytest.approx(62.4)
    assert (row['pitch_max'], row['pitch_min'], row['pitch_range']) == (65, 60, 5)
    assert row['track0_pitch_mean'] == pytest.approx(182 / 3)
    assert row['track1_pitch_range'] == 0
    assert row['onset_velocity_mean'] == pytest.approx(2.3 / 3)
    assert row['onset_velocity_range'] == pytest.approx(0.3)
    assert row['style_probability'] == pytest.approx(0.3)


def test_bar_metrics_of_a_silent_bar(tiny_cfg):
    pitch = np.full((1, 4, 2), tiny_cfg.silence_index)
    metrics = bar_metrics(pitch, np.zeros((1, 4, 2)), tiny_cfg, np.array([0.5]))
    assert np.all(metrics[0, :-1] == 0)


def test_pearson_rows():
    x = np.array([[1.0, 2.0, 3.0]])
    y = np.array([[[2.0, 7.0, 3.0], [4.0, 7.0, 2.0], [6.0, 7.0, 1.0]]])
    np.testing.assert_allclose(pearson_rows(x, y), [[1.0, 0.0, -1.0]])


def test_latent_sweep_shape(tiny_model32, ensemble, tiny_songs):
    latents = np.concatenate(tiny_model32.encode_songs(tiny_songs[:2]))
    sigma = np.ones(tiny_model32.hp.latent_dim)
    table = latent_sweep(tiny_model32, latents[:2], ensemble, sigma, points=3, dims=[0, 4])
    assert table.shape == (2, 19)
    assert table.index.tolist() == [0, 4]
    assert np.all(np.abs(table.to_numpy()) <= 1.0 + 1e-9)
    with pytest.raises(InvalidParameter):
        latent_sweep(tiny_model32, latents, ensemble, sigma, points=1)


def test_latent_sweep_decodes_in_chunks(tiny_model32, ensemble, tiny_songs):
    latents = np.concatenate(tiny_model32.encode_songs(tiny_songs[:2]))[:2]
    sigma = np.full(tiny_model32.hp.latent_dim, 0.5)
    whole = latent_sweep(tiny_model32, latents, ensemble, sigma, points=4, batch_size=1000)
    chunked = latent_sweep(tiny_model32, latents, ensemble, sigma, points=4, batch_size=5)
    pd.testing.assert_frame_equal(whole, chunked, check_exact=False, atol=1e-5)
    with pytest.raises(InvalidParameter):
        latent_sweep(tiny_model32, latents, ensemble, sigma, batch_size=0)


def test_identity_transfer_changes_nothing(ensemble, tiny_songs):
    report = before_after_report(None, ensemble, {'train': tiny_songs[:4], 'test': tiny_songs[4:]}, transfer=_keep_song)
    assert len(report.table) == 2 * 4 * 2
    assert np.all(report.table['diff'] == 0)
    assert report.diff('test') == 0
    assert set(report.ensemble_view()['classifier']) == {ENSEMBLE}
    view = report.classifier_view('test', ACCURACY)
    assert view['classifier'].tolist() == ['pitch', 'velocity', 'instrument']
    assert PROBABILITY in report.to_text()


def test_model_transfer_report(tiny_model32, ensemble, tiny_songs):
    report = before_after_report(tiny_model32, ensemble, {'test': tiny_songs[4:]})
    assert list(report.table.columns) == ['split', 'classifier', 'metric', 'before', 'after', 'diff']
    np.testing.assert_allclose(report.table['diff'], report.table['before'] - report.table['after'])


def test_instrument_switch_matrix(tiny_songs):
    def to_strings(song, spec):
        return SongRecord(song.bars, (40,) * len(song.instruments), StyleLabel(spec.target_style, 'b'))

    result = instrument_switch_matrix(None, tiny_songs, TransferSpec(0, 1), transfer=to_strings)
    assert result.matrix.loc['piano', 'strings'] == 1.0
    assert result.matrix.to_numpy().sum() == 1.0
    assert result.observed.tolist() == [family == 'piano' for family in GM_FAMILIES]
    assert gm_family(127) == 15
    assert 'observed' in result.to_text()


def test_reconstruction_table(tiny_model32, tiny_songs):
    table = reconstruction_table(tiny_model32, {'train': tiny_songs[:4], 'test': tiny_songs[4:], 'empty': []})
    assert table['split'].tolist() == ['train', 'test']
    assert list(table.columns) == ['split', 'pitch_acc', 'instrument_acc', 'style_acc', 'velocity_mse']


def test_export_latents(tmp_path, tiny_model32, ensemble, tiny_songs):
    path = export_latents(tiny_model32, tiny_songs[:2], ensemble, tmp_path / 'out' / 'latents.csv')
    frame = pd.read_csv(path)
    latent_dim = tiny_model32.hp.latent_dim
    assert list(frame.columns[:4]) == ['song_id', 'bar_index', 'style', 'source_probability']
    assert list(frame.columns[4:]) == [f"z_{i}" for i in range(latent_dim)]
    assert len(frame) == len(tiny_songs[0]) + len(tiny_songs[1])
    expected = tiny_model32.encode_songs(tiny_songs[:1])[0]
    np.testing.assert_allclose(frame.iloc[:len(tiny_songs[0]), 4:].to_numpy(), expected, rtol=1e-5, atol=1e-6)
