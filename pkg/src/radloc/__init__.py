"""Adversarially adaptive WiFi fingerprint localization on synthetic radio data."""

from .autograd import Parameter, Tensor
from .metrics import ErrorStats, evaluate_model, localization_error, summarize
from .network import DaanConfig, DaanModel, build_model, load_checkpoint, \
    predict_location, save_checkpoint
from .optim import LrSchedule, lr_at, sgd_step
from .simulate import Environment, FingerprintDataset, RadioImage, ShiftSpec, \
    generate_domain, make_radio_image, path_loss_db, preset_environment, synth_csi
from .train import TrainState, train

__version__ = "0.1.0"

__all__ = [
    "DaanConfig", "DaanModel", "Environment", "ErrorStats",
    "FingerprintDataset", "LrSchedule", "Parameter", "RadioImage",
    "ShiftSpec", "Tensor", "TrainState", "build_model", "evaluate_model",
    "generate_domain", "load_checkpoint", "localization_error", "lr_at",
    "make_radio_image", "path_loss_db", "predict_location",
    "preset_environment", "save_checkpoint", "sgd_step", "summarize",
    "synth_csi", "train",
]
