from .hyperparams import HyperParams
from .vae import BarBatch, CarryState, DecoderOutput, LossBreakdown, MidiVae, StepResult
from .style_ops import (
    LatentStats,
    TransferSpec,
    autoencode_song,
    decode_latents,
    empirical_latent_stats,
    generate_song,
    interpolate,
    majority_programs,
    medley,
    mixture,
    sample_prior,
    song_latents,
    swap_style,
    transfer_song,
)
from .checkpointing import ModelBundle, load_model, save_model
from .trainer import METRIC_COLUMNS, Trainer, TrainingResult, iterate_slots, train
