import io

import numpy as np
import pytest

from midivae.exceptions import ConfigError, EmptyStyle
from midivae.logs import get_logger
from midivae.midi.dataset import (
    discover_styles,
    encode_corpus,
    load_cache,
    save_cache,
    style_files,
    style_names,
    summarize,
)
from midivae.midi.midi_io import write_midi_file
from midivae.midi.roll_codec import decode_song

from .conftest import random_song


@pytest.fixture
def corpus(tmp_path, tiny_cfg):
    """Two styles of three songs each, plus an unreadable file in the first style."""
    rng = np.random.default_rng(8)
    songs = {}
    for index, style in enumerate(['classic', 'jazz']):
        for number in range(3):
            song = random_song(rng, tiny_cfg, n_bars=2, style=index, song_id=f"{style}/song_{number}.mid")
            write_midi_file(tmp_path / style / f"song_{number}.mid", decode_song(song, tiny_cfg))
            songs[song.song_id] = song
    (tmp_path / 'classic' / 'broken.mid').write_bytes(b"not a midi file")
    (tmp_path / 'classic' / 'notes.txt').write_text('ignored')
    return tmp_path, songs


def test_styles_and_files_are_sorted(corpus):
    root, _ = corpus
    assert discover_styles(root) == ['classic', 'jazz']
    assert [path.name for path in style_files(root, 'classic')] == ['broken.mid', 'song_0.mid', 'song_1.mid', 'song_2.mid']
    assert style_files(root, 'missing') == []


@pytest.mark.parametrize('workers', [1, 2])
def test_encode_corpus_skips_unreadable_files(corpus, tiny_cfg, workers):
    root, originals = corpus
    songs = encode_corpus(root, ['jazz', 'classic'], tiny_cfg, workers=workers)
    assert [song.song_id for song in songs] == [
        'classic/song_0.mid', 'classic/song_1.mid', 'classic/song_2.mid',
        'jazz/song_0.mid', 'jazz/song_1.mid', 'jazz/song_2.mid',
    ]
    for song in songs:
        assert song.same_rolls(originals[song.song_id])
        assert song.style.index == (0 if song.song_id.startswith('classic') else 1)
        assert song.source_path.endswith(song.song_id.split('/')[1])


def test_style_without_songs_aborts(corpus, tiny_cfg):
    root, _ = corpus
    (root / 'empty').mkdir()
    with pytest.raises(EmptyStyle):
        encode_corpus(root, ['classic', 'empty'], tiny_cfg)


def test_cache_round_trip(tmp_path, corpus, tiny_cfg):
    root, _ = corpus
    songs = encode_corpus(root, ['classic', 'jazz'], tiny_cfg)
    path = save_cache(tmp_path / 'cache' / 'dataset.parquet', songs[:4], songs[4:])
    train, test = load_cache(path, tiny_cfg)
    assert [song.song_id for song in train] == [song.song_id for song in songs[:4]]
    for loaded, original in zip(train + test, songs):
        assert loaded.same_rolls(original)
        assert loaded.style == original.style
        assert loaded.source_path == original.source_path
        assert loaded.bars[0].velocity.dtype == np.float32


def test_summary_and_style_names(corpus, tiny_cfg):
    root, _ = corpus
    songs = encode_corpus(root, ['classic', 'jazz'], tiny_cfg)
    summary = summarize(songs)
    assert summary.to_dict('records') == [
        {'Dataset': 'classic', '#Songs': 3, '#Bars': 6},
        {'Dataset': 'jazz', '#Songs': 3, '#Bars': 6},
    ]
    assert style_names(songs) == ['classic', 'jazz']
    assert style_names(songs[:3], k=2) == ['classic', 'style_1']


def test_logger_stamps_run_constants():
    stream = io.StringIO()
    logger = get_logger('midivae.test', stream=stream, run_id='r1', command='train')
    logger.info('hello')
    assert stream.getvalue().rstrip().endswith(' - r1 - train - INFO - hello')
    get_logger('midivae.test', stream=stream, log_level='WARNING')
    assert len(logger.handlers) == 1
    with pytest.raises(ConfigError):
        get_logger('midivae.test', log_level='LOUD')
