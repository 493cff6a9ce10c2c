from .base import Reconstructor, TrainableReconstructor, image_key, observe
from .oracle import DEFAULT_BOUNDS, OracleReconstructor, oracle_reconstruct
from .synthetic import PARAM_RANGES, SyntheticFaceSpec, face_photo, generate_synthetic_face
from .toy import LrSchedule, ToyRegressor, load_toy, save_toy, toy_fit, toy_reconstruct

__all__ = ["Reconstructor", "TrainableReconstructor", "image_key", "observe", "DEFAULT_BOUNDS",
           "OracleReconstructor", "oracle_reconstruct", "PARAM_RANGES", "SyntheticFaceSpec", "face_photo",
           "generate_synthetic_face", "LrSchedule", "ToyRegressor", "load_toy", "save_toy", "toy_fit",
           "toy_reconstruct"]
