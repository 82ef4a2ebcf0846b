"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class AmbianceError(Exception):
    """Base class for all errors raised by this package."""


# imaging
class UnsupportedFormat(AmbianceError):
    pass


class CorruptData(AmbianceError):
    pass


class ImageTooSmall(AmbianceError):
    pass


# face annotation
class ProviderUnavailable(AmbianceError):
    """Annotation source could not be reached or read (distinct from "no face")."""


class MalformedResponse(AmbianceError):
    pass


class SchemaMismatch(AmbianceError):
    pass


class DuplicatePictureId(AmbianceError):
    pass


# face features
class NoFace(AmbianceError):
    pass


class InsufficientData(AmbianceError):
    pass


class DegenerateCovariance(AmbianceError):
    pass


class ModelMismatch(AmbianceError):
    pass


class DegenerateCorpus(AmbianceError):
    pass


# aggregation
class ManifestMismatch(AmbianceError):
    pass


class WrongGroupSize(AmbianceError):
    pass


# ambiance model
class TooFewPoints(AmbianceError):
    pass


class SingleCluster(AmbianceError):
    pass


class UnknownDimension(AmbianceError):
    pass


class EmptyClusterAfterMove(AmbianceError):
    pass


class MissingDimension(AmbianceError):
    pass


class RelabelConfigError(AmbianceError):
    """Relabel configuration is malformed (bad block, dimension listed twice)."""


# statistics / prediction
class LengthMismatch(AmbianceError):
    pass


class AlignmentError(AmbianceError):
    pass


class TooFewSamples(AmbianceError):
    pass


class TooFewFeatures(AmbianceError):
    pass


class SingularAfterRidge(AmbianceError):
    pass


# cli
class LayoutInvalid(AmbianceError):
    pass


class StageError(AmbianceError):
    """Wraps a failure with the label of the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
