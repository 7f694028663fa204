"""Shot boundary detection from mixed frame-difference features and boosted trees."""

from .classify import BoundaryEvent, GbdtModel, classify_stream, postfilter
from .frameio import Frame, StreamInfo, Y4MReader, open_y4m, read_image_sequence
from .metrics import FeatureTrack, FeatureVector, MetricConfig, assemble_features, extract_features
from .train import TrainParams, train_gbdt

__version__ = "0.1.0"

__all__ = [
    "BoundaryEvent", "GbdtModel", "classify_stream", "postfilter",
    "Frame", "StreamInfo", "Y4MReader", "open_y4m", "read_image_sequence",
    "FeatureTrack", "FeatureVector", "MetricConfig", "assemble_features", "extract_features",
    "TrainParams", "train_gbdt",
]
