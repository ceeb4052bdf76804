from .run_config import RunConfig, build_run_config, load_run_config, read_config_file
from .toy_corpus import ToyCorpusSpec, ToyStyle, make_toy_corpus, make_toy_song
