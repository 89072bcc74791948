"""Exception hierarchy shared across the toolkit.

Every error raised by library code derives from RendertimeError so the CLI
can map failures to exit code 1 while argument mistakes stay exit code 2.
"""


class RendertimeError(Exception):
    """Base class for all toolkit errors."""


# volcore
class DimsOutOfRange(RendertimeError):
    pass


class TargetTooLarge(RendertimeError):
    pass


class SizeMismatch(RendertimeError):
    pass


class MissingSidecar(RendertimeError):
    pass


class VolumeIoError(RendertimeError):
    pass


# raycaster
class StepSizeOutOfRange(RendertimeError):
    pass


class RenderFailure(RendertimeError):
    pass


# nnkit
class ShapeMismatch(RendertimeError):
    pass


class BatchTooSmall(RendertimeError):
    pass


# volumenet / prednet
class WrongResolution(RendertimeError):
    pass


class WrongDim(RendertimeError):
    pass


class EmptyDataset(RendertimeError):
    pass


class TooFewSamples(RendertimeError):
    pass


class DimMismatch(RendertimeError):
    pass


class MissingScaler(RendertimeError):
    pass


# baselines
class EmptyTasks(RendertimeError):
    pass


class UnfittedModel(RendertimeError):
    pass


# eval
class LengthMismatch(RendertimeError):
    pass


class IncompleteTable(RendertimeError):
    pass


# stepctl
class DegenerateSweep(RendertimeError):
    pass


# lpt
class EmptyTaskSet(RendertimeError):
    pass


class InstanceTooLarge(RendertimeError):
    pass


# harness
class EmptyResult(RendertimeError):
    pass
