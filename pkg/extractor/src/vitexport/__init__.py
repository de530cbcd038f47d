"""Transformer patch-token export and anomaly duplication tooling."""

from .backbones import available_backbones, load_backbone
from .cdgf import read_features, write_features
from .errors import (ImageDecodeError, JobError, MissingMask, ModelLoadError,
                     VitExportError)
from .extract import ExtractionJob, extract
from .synca import SyncaConfig, make_synca

__all__ = [
    "ExtractionJob", "extract", "SyncaConfig", "make_synca",
    "available_backbones", "load_backbone", "read_features", "write_features",
    "VitExportError", "JobError", "ModelLoadError", "ImageDecodeError",
    "MissingMask",
]
