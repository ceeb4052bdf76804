from .classifiers import StyleClassifier, songs_batch, train_classifiers, train_style_classifier
from .ensemble import EnsembleClassifier, ensemble_predict, majority_vote, song_style_score
from .metrics import SWEEP_METRIC_NAMES, bar_metrics, decoded_metrics, latent_sweep, pearson_rows, sweep_metric_names
from .reports import (
    SwitchMatrix,
    TransferReport,
    before_after_report,
    export_latents,
    gm_family,
    instrument_switch_matrix,
    reconstruction_table,
)
