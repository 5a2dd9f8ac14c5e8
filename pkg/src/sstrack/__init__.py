"""sstrack: online multi-object tracking with a state-space motion model,
buffered height-aware IoU association, and a synthetic evaluation harness."""

__version__ = "0.1.0"

from .association import AssociationConfig, associate_frame, hybrid_cost, solve_assignment
from .geometry import (
    BoundingBox,
    ciou_grad,
    ciou_loss,
    eiou,
    expand,
    ha_eiou,
    hiou,
    iou,
)
from .metrics import EvalReport, evaluate, evaluate_sequences
from .motion import (
    ConstantVelocityPredictor,
    ModelConfig,
    MotionPredictor,
    init_params,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
)
from .mot_io import Detection, SequenceData, load_sequence_dir
from .pipeline import OnlineTracker, run_sequence
from .simulator import Scenario, SimOutput, generate, write_sim_dir
from .track_manager import (
    TrackManager,
    TrackManagerConfig,
    TrackState,
    Tracklet,
    dynamic_ema,
    ema_weight,
)
from .trainer import TrainConfig, TrackletSample, smooth_l1, total_loss, train

__all__ = [
    "__version__",
    "AssociationConfig",
    "associate_frame",
    "hybrid_cost",
    "solve_assignment",
    "BoundingBox",
    "iou",
    "expand",
    "eiou",
    "hiou",
    "ha_eiou",
    "ciou_loss",
    "ciou_grad",
    "EvalReport",
    "evaluate",
    "evaluate_sequences",
    "ModelConfig",
    "init_params",
    "predict",
    "predict_batch",
    "save_checkpoint",
    "load_checkpoint",
    "MotionPredictor",
    "ConstantVelocityPredictor",
    "Detection",
    "SequenceData",
    "load_sequence_dir",
    "OnlineTracker",
    "run_sequence",
    "Scenario",
    "SimOutput",
    "generate",
    "write_sim_dir",
    "TrackManager",
    "TrackManagerConfig",
    "TrackState",
    "Tracklet",
    "dynamic_ema",
    "ema_weight",
    "TrainConfig",
    "TrackletSample",
    "smooth_l1",
    "total_loss",
    "train",
]
