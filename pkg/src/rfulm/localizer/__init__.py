from .baseline import weighted_average_baseline
from .network import SrNetwork, pixel_shuffle, pixel_unshuffle
from .target import TargetMask, build_target, gaussian_kernel, loss, loss_grad
from .train import Adam, TrainConfig, cosine_lr, predict, prepare_input, train

__all__ = [
    "Adam", "SrNetwork", "TargetMask", "TrainConfig", "build_target", "cosine_lr",
    "gaussian_kernel", "loss", "loss_grad", "pixel_shuffle", "pixel_unshuffle", "predict",
    "prepare_input", "train", "weighted_average_baseline",
]
