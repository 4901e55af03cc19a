"""movidnn: benchmark DNN-based video quality enhancement, objectively and subjectively.

The pipeline runs a model frame-by-frame over uncompressed clips and
reports PSNR/SSIM/timing as CSV; the subjective service hosts blind,
randomized MOS rating sessions over HTTP.
"""

from .inference import (
    Activation,
    Conv2d,
    ModelGraph,
    PixelShuffle,
    ResidualAdd,
    Tensor,
    load_model,
    pixel_shuffle,
    run_model,
    save_model,
    space_to_depth,
)
from .metrics import MetricsReport, SsimParams, aggregate, psnr_frame, ssim_frame
from .models import ArchConfig, CalibrationStats, build_architecture, calibrate, quantize_graph
from .pipeline import DnnTestConfig, DnnTestResult, run_dnn_test, write_metrics_csv
from .subjective import MosRow, PlaylistItem, SubjectiveSession, compute_mos, submit_rating
from .video_io import (
    Frame,
    VideoSequence,
    frame_to_tensor,
    parse_raw_yuv,
    parse_y4m,
    tensor_to_frame,
    trim_to_duration,
    write_y4m,
)

__version__ = "0.1.0"

__all__ = [
    "Activation", "ArchConfig", "CalibrationStats", "Conv2d", "DnnTestConfig",
    "DnnTestResult", "Frame", "MetricsReport", "ModelGraph", "MosRow",
    "PixelShuffle", "PlaylistItem", "ResidualAdd", "SsimParams",
    "SubjectiveSession", "Tensor", "VideoSequence", "aggregate",
    "build_architecture", "calibrate", "compute_mos", "frame_to_tensor",
    "load_model", "parse_raw_yuv", "parse_y4m", "pixel_shuffle",
    "psnr_frame", "quantize_graph", "run_dnn_test", "run_model",
    "save_model", "space_to_depth", "ssim_frame", "submit_rating",
    "tensor_to_frame", "trim_to_duration", "write_y4m", "write_metrics_csv",
]
