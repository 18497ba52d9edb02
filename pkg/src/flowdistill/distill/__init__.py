from .dataset import (
    DatasetError,
    SequenceDataset,
    Split,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .teacher import (
    AnalyticTeacher,
    FileTeacher,
    NoisyTeacher,
    TeacherError,
    TeacherOracle,
    generate_gold,
)
from .train import EvalResult, FineTuneConfig, TrainingLog, evaluate, fine_tune

__all__ = [
    "DatasetError",
    "SequenceDataset",
    "Split",
    "split_dataset",
    "save_dataset",
    "load_dataset",
    "TeacherOracle",
    "TeacherError",
    "AnalyticTeacher",
    "FileTeacher",
    "NoisyTeacher",
    "generate_gold",
    "FineTuneConfig",
    "TrainingLog",
    "fine_tune",
    "evaluate",
    "EvalResult",
]
