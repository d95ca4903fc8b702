"""Exception hierarchy shared by all pipeline stages."""


class CadgraphError(Exception):
    """Base class for every error raised by cadgraph."""


# scene ingestion
class UnreadableFile(CadgraphError):
    pass


class MalformedGeometry(CadgraphError):
    pass


class UnitMismatch(CadgraphError):
    pass


# geometry / spatial index
class EmptyMesh(CadgraphError):
    pass


class EmptyPointSet(CadgraphError):
    pass


class EpsilonExceedsCutoff(CadgraphError):
    pass


# scene graph
class UnknownGroupInAdjacency(CadgraphError):
    pass


class SchemaVersionMismatch(CadgraphError):
    pass


class UnknownSelector(CadgraphError):
    pass


# labeling
class MalformedVocabulary(CadgraphError):
    pass


class MissingImages(CadgraphError):
    pass


class LabelingError(CadgraphError):
    """A single labeling attempt failed; retried by :func:`label_scene`."""


class UnparseableResponse(LabelingError):
    pass


class UnknownLabelWithoutProposal(LabelingError):
    pass


class LabelingFailed(CadgraphError):
    def __init__(self, path: str, attempts: int, cause: str):
        super().__init__(f"{path}: labeling failed after {attempts} attempt(s): {cause}")
        self.path = path
        self.attempts = attempts
        self.cause = cause


# functional analysis / evaluation / synthesis
class OverlappingUnits(CadgraphError):
    pass


class EmptyScope(CadgraphError):
    pass


class InvalidSpec(CadgraphError):
    pass


# orchestration
class ConfigError(CadgraphError):
    pass


class StageError(CadgraphError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class NothingVisible(UserWarning):
    """Render produced no geometry pixels; the background image is returned."""
