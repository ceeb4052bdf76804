import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

from ..config import MIDI_SUFFIXES, TEST, TRAIN
from ..exceptions import EmptyStyle, MidiVaeError
from .midi_io import read_midi_file
from .roll_codec import BarSample, RollConfig, SongRecord, StyleLabel, encode_song

logger = logging.getLogger(__name__)

CACHE_COLUMNS = [
    'song_id', 'style_index', 'style_name', 'split', 'source_path',
    'bar_index', 'instruments', 'pitch', 'velocity',
]


def discover_styles(root: Union[str, Path]) -> List[str]:
    """Style names are the subdirectories of 'root' in lexicographic order."""
    return sorted(entry.name for entry in Path(root).iterdir() if entry.is_dir())


def style_files(root: Union[str, Path], style: str) -> List[Path]:
    directory = Path(root) / style
    if not directory.is_dir():
        return []
    return sorted(path for path in directory.iterdir() if path.suffix.lower() in MIDI_SUFFIXES)


def _encode_file(job: Tuple[str, str, StyleLabel, RollConfig]):
    path, song_id, style, cfg = job
    try:
        doc = read_midi_file(path)
        return encode_song(doc, style, cfg, song_id=song_id, source_path=path), None
    except (MidiVaeError, OSError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def encode_corpus(
    root: Union[str, Path],
    styles: Sequence[str],
    cfg: RollConfig,
    workers: int = 1,
) -> List[SongRecord]:
    """
    Encodes every MIDI file under <root>/<style>/. Files that fail to parse are logged
    and skipped; a style with no encodable song aborts.

    Parameters
    ----------------
    root: str or Path
        Dataset directory.
        Field is required.
    styles: list of str
        Style subdirectories. Style index follows lexicographic order.
        Field is required.
    cfg: RollConfig
        Field is required.
    workers: int
        Parse files in this many processes; output order stays sorted by path.
        Field is not required. Default: 1.
    """
    songs: List[SongRecord] = []
    for index, name in enumerate(sorted(styles)):
        style = StyleLabel(index=index, name=name)
        jobs = [(str(path), f"{name}/{path.name}", style, cfg) for path in style_files(root, name)]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_encode_file, jobs))
        else:
            results = [_encode_file(job) for job in jobs]

        encoded = []
        for job, (song, error) in zip(jobs, results):
            if error is not None:
                logger.warning(f"Skipping '{job[0]}': {error}")
                continue
            encoded.append(song)
        if not encoded:
            raise EmptyStyle(f"Style '{name}' has no encodable songs under '{Path(root) / name}'.")
        logger.info(f"Style '{name}': {len(encoded)} songs, {sum(len(s) for s in encoded)} bars")
        songs.extend(encoded)
    return songs


def summarize(songs: Sequence[SongRecord]) -> pd.DataFrame:
    """Songs and bars per style."""
    rows = [{'Dataset': song.style.name, 'style_index': song.style.index, '#Songs': 1, '#Bars': len(song)} for song in songs]
    df = pd.DataFrame(rows, columns=['Dataset', 'style_index', '#Songs', '#Bars'])
    df = df.groupby(['style_index', 'Dataset'], as_index=False)[['#Songs', '#Bars']].sum()
    return df.drop(columns='style_index')


def _song_rows(song: SongRecord, split: str) -> List[dict]:
    return [
        {
            'song_id': song.song_id,
            'style_index': song.style.index,
            'style_name': song.style.name,
            'split': split,
            'source_path': song.source_path,
            'bar_index': bar.bar_index,
            'instruments': list(song.instruments),
            'pitch': bar.pitch.reshape(-1).tolist(),
            'velocity': bar.velocity.reshape(-1).tolist(),
        }
        for bar in song.bars
    ]


def save_cache(path: Union[str, Path], train: Sequence[SongRecord], test: Sequence[SongRecord]) -> Path:
    """Writes both splits as one parquet table, one row per bar."""
    rows = [row for song in train for row in _song_rows(song, TRAIN)]
    rows += [row for song in test for row in _song_rows(song, TEST)]
    df = pd.DataFrame(rows, columns=CACHE_COLUMNS)
    schema = pa.schema([
        ('song_id', pa.string()),
        ('style_index', pa.int64()),
        ('style_name', pa.string()),
        ('split', pa.string()),
        ('source_path', pa.string()),
        ('bar_index', pa.int64()),
        ('instruments', pa.list_(pa.int64())),
        ('pitch', pa.list_(pa.int64())),
        ('velocity', pa.list_(pa.float32())),
    ])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pq.write_table(pa.Table.from_pandas(df, schema=schema, preserve_index=False), path)
    return path


def load_cache(path: Union[str, Path], cfg: RollConfig) -> Tuple[List[SongRecord], List[SongRecord]]:
    """Reads a cache written by save_cache back into (train, test) songs."""
    df = pq.read_table(Path(path)).to_pandas()
    splits = {TRAIN: [], TEST: []}
    for (split, song_id), group in df.groupby(['split', 'song_id'], sort=False):
        group = group.sort_values('bar_index')
        first = group.iloc[0]
        bars = [
            BarSample(
                pitch=np.asarray(row.pitch, dtype=np.int64).reshape(cfg.n_steps, cfg.n_tracks),
                velocity=np.asarray(row.velocity, dtype=np.float32).reshape(cfg.n_steps, cfg.n_tracks),
                bar_index=int(row.bar_index),
                song_id=song_id,
            )
            for row in group.itertuples(index=False)
        ]
        splits[split].append(SongRecord(
            bars=bars,
            instruments=tuple(int(p) for p in first.instruments),
            style=StyleLabel(index=int(first.style_index), name=str(first.style_name)),
            source_path=str(first.source_path),
        ))
    return splits[TRAIN], splits[TEST]


def style_names(songs: Sequence[SongRecord], k: Optional[int] = None) -> List[str]:
    names = {song.style.index: song.style.name for song in songs}
    count = k if k is not None else len(names)
    return [names.get(index, f'style_{index}') for index in range(count)]
