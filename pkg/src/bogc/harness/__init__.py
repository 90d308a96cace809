from .data import Dataset, SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from .report import emit_report, read_report
from .studies import run_discovery, run_s_ablation
from .training import EpochRecord, ExperimentRecord, StepRecord, TrainConfig, train
