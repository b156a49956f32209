from .schedule import NoiseSchedule, forward_noise
from .model import Denoiser, DenoiserConfig
from .train import TrainConfig, TrainResult, TrainingDivergence, train, save_loss_trace
from .sample import SamplerConfig, sample_inpaint
from .gradcheck import gradient_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "NoiseSchedule", "forward_noise",
    "Denoiser", "DenoiserConfig",
    "TrainConfig", "TrainResult", "TrainingDivergence", "train",
    "save_loss_trace",
    "SamplerConfig", "sample_inpaint",
    "gradient_check",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
]
