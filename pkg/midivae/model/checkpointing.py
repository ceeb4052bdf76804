from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..config import KIND_MIDIVAE, STATS_PREFIX
from ..exceptions import CheckpointError
from ..midi.roll_codec import RollConfig
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.params import FLOAT32
from .hyperparams import HyperParams
from .style_ops import LatentStats
from .vae import MidiVae


@dataclass(eq=False)
class ModelBundle:
    """A trained model with the latent statistics and style names stored next to it."""
    model: MidiVae
    stats: Optional[LatentStats] = None
    style_names: List[str] = field(default_factory=list)


def save_model(
    path: Union[str, Path],
    model: MidiVae,
    stats: Optional[LatentStats] = None,
    style_names: Optional[Sequence[str]] = None,
) -> Path:
    tensors = model.state_tensors()
    if stats is not None:
        tensors.update(stats.to_tensors())
    meta = {
        'kind': KIND_MIDIVAE,
        'hyperparams': model.hp.to_dict(),
        'roll_config': asdict(model.cfg),
        'style_names': list(style_names or []),
        'stats': None if stats is None else {'sample_count': int(stats.sample_count)},
    }
    return save_checkpoint(path, tensors, meta)


def load_model(path: Union[str, Path], dtype=FLOAT32) -> ModelBundle:
    tensors, meta = load_checkpoint(path)
    if meta.get('kind') != KIND_MIDIVAE:
        raise CheckpointError(f"'{path}' holds a '{meta.get('kind')}' checkpoint, expected '{KIND_MIDIVAE}'.")
    try:
        hp = HyperParams.from_dict(meta['hyperparams'])
        cfg = RollConfig(**meta['roll_config'])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"'{path}' has incomplete metadata: {exc}") from exc

    model = MidiVae(hp, cfg, dtype=dtype)
    model.load_tensors({name: value for name, value in tensors.items() if not name.startswith(STATS_PREFIX)})
    stats = None
    if meta.get('stats'):
        stats = LatentStats.from_tensors(tensors, meta['stats']['sample_count'])
    return ModelBundle(model=model, stats=stats, style_names=list(meta.get('style_names', [])))
