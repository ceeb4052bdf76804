# Symbolic representation
PITCH_LO = 24
PITCH_HI_EXCLUSIVE = 84
N_PITCHES = PITCH_HI_EXCLUSIVE - PITCH_LO
STEPS_PER_BAR = 16
STEPS_PER_QUARTER = 4
N_TRACKS = 4
N_INSTRUMENTS = 128
DRUM_CHANNEL = 9

ONSET_THRESHOLD = 0.5
HOLD_VALUE = 0.25
SILENT_VALUE = 0.0

# MIDI export
DEFAULT_TEMPO_BPM = 120.0
DEFAULT_TICKS_PER_QUARTER = 480
MICROSECONDS_PER_MINUTE = 60_000_000
DEFAULT_VELOCITY = 64

# General MIDI families (program // 8)
GM_FAMILY_SIZE = 8
GM_FAMILIES = [
    'piano',
    'chromatic_percussion',
    'organ',
    'guitar',
    'bass',
    'strings',
    'ensemble',
    'brass',
    'reed',
    'pipe',
    'synth_lead',
    'synth_pad',
    'synth_effects',
    'ethnic',
    'percussive',
    'sound_effects',
]

# Checkpoints
CHECKPOINT_MAGIC = b"MVAE"
CHECKPOINT_VERSION = 1
STATS_PREFIX = "stats/"
KIND_MIDIVAE = 'midivae'
KIND_STYLE_CLASSIFIER = 'style_classifier'

# Training
TRAIN = 'train'
TEST = 'test'
VALID_SPLITS = [TRAIN, TEST]
DEFAULT_SPLIT_RATIO = 0.9

# Evaluation features
PITCH = 'pitch'
VELOCITY = 'velocity'
INSTRUMENT = 'instrument'
ENSEMBLE = 'ensemble'
VALID_FEATURES = [PITCH, VELOCITY, INSTRUMENT]

ACCURACY = 'accuracy'
PROBABILITY = 'probability'

SWEEP_POINTS = 7
SWEEP_SCALE = 3.0

# CLI / files
CACHE_ENV_VAR = 'MIDIVAE_CACHE'
CACHE_DIRNAME = 'cache'
DATASET_CACHE_FILE = 'dataset.parquet'
SUMMARY_FILE = 'summary.csv'
CHECKPOINT_FILE = 'model.mvae'
METRICS_LOG_FILE = 'metrics.csv'
CLASSIFIER_DIRNAME = 'classifiers'
MIDI_SUFFIXES = ['.mid', '.midi']

LOG_FORMAT = '%(asctime)s - %(run_id)s - %(command)s - %(levelname)s - %(message)s'
VALID_LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL', 'NOTSET']
