"""Datasets, KL evaluation, experiments and the command line interface."""
from .data import Dataset, KlEvaluator, build_model, evaluate_kl, generate_synthetic, load_csv, write_csv
from .experiment import ExperimentConfig, load_config, run_experiment
