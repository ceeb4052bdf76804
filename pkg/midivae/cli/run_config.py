import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

from ..config import (
    CACHE_DIRNAME,
    CACHE_ENV_VAR,
    CHECKPOINT_FILE,
    CLASSIFIER_DIRNAME,
    DATASET_CACHE_FILE,
    DEFAULT_SPLIT_RATIO,
    METRICS_LOG_FILE,
    SUMMARY_FILE,
)
from ..exceptions import ConfigError, MidiVaeError
from ..midi.roll_codec import RollConfig
from ..model.hyperparams import HyperParams

RUN_SECTION = 'run'
RUN_KEYS = ['dataset_root', 'styles', 'output_dir', 'seed', 'split_ratio', 'workers']
ROLL_KEYS = ['pitch_lo', 'pitch_hi_exclusive', 'n_steps', 'n_tracks', 'n_instruments']
HYPERPARAM_KEYS = [f.name for f in fields(HyperParams) if f.name != 'seed']
VALID_KEYS = RUN_KEYS + ROLL_KEYS + HYPERPARAM_KEYS


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a command needs: where the corpus and the outputs live, which two styles
    the model is trained on, the hyperparameters and the roll sizes.

    * Main use case:

    >>> rc = load_run_config('run.cfg', seed=3, output_dir='runs/jazz-classic')
    >>> rc.hp.latent_dim, rc.checkpoint_path

    Parameters
    ----------------
    dataset_root: Path
        Corpus laid out as <root>/<style>/*.mid.
        Field is not required. Default: None.
    styles: tuple of str
        Exactly hp.k style names; empty means every subdirectory of dataset_root.
        Field is not required. Default: ().
    output_dir: Path
        Field is not required. Default: 'midivae-run'.
    seed: int
        Also copied into hp.seed.
        Field is not required. Default: 0.
    split_ratio: float
        Share of songs that go to the training split.
        Field is not required. Default: 0.9.
    workers: int
        Processes used to parse MIDI files in 'prepare'.
        Field is not required. Default: 1.
    """
    dataset_root: Optional[Path] = None
    styles: Tuple[str, ...] = ()
    output_dir: Path = Path('midivae-run')
    seed: int = 0
    split_ratio: float = DEFAULT_SPLIT_RATIO
    workers: int = 1
    hp: HyperParams = field(default_factory=HyperParams)
    roll: RollConfig = field(default_factory=RollConfig)

    def __post_init__(self):
        if self.hp.k != 2:
            raise ConfigError(f"A run trains one model per style pair; 'k' must be 2. Input value: {self.hp.k}.")
        if self.styles and len(self.styles) != self.hp.k:
            raise ConfigError(f"'styles' must name exactly {self.hp.k} styles. Input value: {list(self.styles)}.")
        if len(set(self.styles)) != len(self.styles):
            raise ConfigError(f"'styles' must be distinct. Input value: {list(self.styles)}.")
        if not 0 < self.split_ratio < 1:
            raise ConfigError(f"'split_ratio' must lie in (0, 1). Input value: {self.split_ratio}.")
        if self.workers < 1:
            raise ConfigError(f"'workers' must be >= 1. Input value: {self.workers}.")

    @property
    def cache_dir(self) -> Path:
        override = os.environ.get(CACHE_ENV_VAR)
        return Path(override) if override else self.output_dir / CACHE_DIRNAME

    @property
    def dataset_cache_path(self) -> Path:
        return self.cache_dir / DATASET_CACHE_FILE

    @property
    def summary_path(self) -> Path:
        return self.cache_dir / SUMMARY_FILE

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / CHECKPOINT_FILE

    @property
    def metrics_path(self) -> Path:
        return self.output_dir / METRICS_LOG_FILE

    @property
    def classifier_dir(self) -> Path:
        return self.output_dir / CLASSIFIER_DIRNAME

    def require_dataset_root(self) -> Path:
        if self.dataset_root is None:
            raise ConfigError("'dataset_root' is not set; add it to the config file.")
        if not self.dataset_root.is_dir():
            raise ConfigError(f"'dataset_root' does not exist: '{self.dataset_root}'.")
        return self.dataset_root


def read_config_file(path: Union[str, Path]) -> dict:
    """Flat 'key = value' lines with '#' comments, returned as a str -> str dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f"Cannot read config file '{path}': {exc}") from exc
    parser = configparser.ConfigParser(comment_prefixes=('#',), inline_comment_prefixes=('#',), interpolation=None)
    try:
        parser.read_string(f"[{RUN_SECTION}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"Malformed config file '{path}': {exc}") from exc
    if parser.sections() != [RUN_SECTION]:
        raise ConfigError(f"Config file '{path}' must be flat; sections are not allowed.")
    return dict(parser.items(RUN_SECTION))


def build_run_config(
    values: Mapping[str, str],
    seed: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """Types the raw key/value pairs; 'seed' and 'output_dir' override the file."""
    unknown = sorted(set(values) - set(VALID_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}. Valid options are: {VALID_KEYS}")
    try:
        run_seed = int(values.get('seed', 0)) if seed is None else int(seed)
        roll_values = {key: int(values[key]) for key in ROLL_KEYS if key in values}
        defaults = RollConfig()
        lo = roll_values.get('pitch_lo', defaults.pitch_lo)
        hi = roll_values.get('pitch_hi_exclusive', defaults.pitch_hi_exclusive)
        roll = RollConfig(n_pitches=hi - lo, **roll_values)
        hp = HyperParams.from_dict({
            **{key: values[key] for key in HYPERPARAM_KEYS if key in values},
            'seed': run_seed,
        })
        styles = tuple(name.strip() for name in values.get('styles', '').split(',') if name.strip())
        out = output_dir if output_dir is not None else values.get('output_dir', RunConfig.output_dir)
        return RunConfig(
            dataset_root=Path(values['dataset_root']) if values.get('dataset_root') else None,
            styles=styles,
            output_dir=Path(out),
            seed=run_seed,
            split_ratio=float(values.get('split_ratio', DEFAULT_SPLIT_RATIO)),
            workers=int(values.get('workers', 1)),
            hp=hp,
            roll=roll,
        )
    except ConfigError:
        raise
    except (ValueError, MidiVaeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> RunConfig:
    values = read_config_file(path) if path is not None else {}
    return build_run_config(values, seed=seed, output_dir=output_dir)
