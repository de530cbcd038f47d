"""Exception taxonomy for the token exporter."""


class VitExportError(Exception):
    """Base class for all exporter errors."""


class JobError(VitExportError):
    """An extraction or augmentation job is misconfigured."""


class ModelLoadError(VitExportError):
    """A backbone could not be constructed or its weights loaded."""


class ImageDecodeError(VitExportError):
    """An input image could not be opened or decoded."""


class MissingMask(VitExportError):
    """An anomalous source image has no ground-truth mask."""
