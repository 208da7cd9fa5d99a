"""Exception hierarchy shared by all modules."""


class SelfTestError(Exception):
    """Base class for every error raised by this package."""


class InvalidShape(SelfTestError, ValueError):
    pass


class ShapeMismatch(SelfTestError, ValueError):
    pass


class InvalidConfig(SelfTestError, ValueError):
    pass


class InvalidModel(SelfTestError, ValueError):
    pass


class UninitializedModel(SelfTestError, RuntimeError):
    pass


class InvalidState(SelfTestError, RuntimeError):
    pass


class InvalidSpec(SelfTestError, ValueError):
    pass


class InvalidSnapshot(SelfTestError, ValueError):
    pass


class EmptyDataset(SelfTestError, ValueError):
    pass


class EmptyBatch(SelfTestError, ValueError):
    pass


class TrainingDiverged(SelfTestError, RuntimeError):
    pass


class InsufficientCalibration(SelfTestError, ValueError):
    pass


class InvalidFingerprint(SelfTestError, ValueError):
    pass


class IncompleteCampaign(SelfTestError, ValueError):
    pass


class CampaignRunError(SelfTestError, RuntimeError):
    def __init__(self, rate_index: int, run_index: int, cause: BaseException):
        super().__init__(f"campaign run failed at rate_index={rate_index}, run={run_index}: {cause!r}")
        self.rate_index = rate_index
        self.run_index = run_index
        self.cause = cause


class FormatError(SelfTestError, ValueError):
    pass


class UnsupportedVersion(SelfTestError, ValueError):
    pass


class CorruptCheckpoint(SelfTestError, ValueError):
    pass


class WriteError(SelfTestError, OSError):
    pass
