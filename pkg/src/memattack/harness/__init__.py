from .cli import main, run_experiment, sweep
from .config import ExperimentConfig, build_config, read_config_file
from .experiments import RUNNERS, SCHEMAS
from .seeds import rng_for, splitmix64, sub_seed
