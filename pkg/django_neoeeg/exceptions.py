from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    IO = 2
    PROTOCOL = 3
    NUMERIC = 4


class NeoEEGError(Exception):
    exit_code = ExitCode.NUMERIC


class ConfigurationError(NeoEEGError):
    exit_code = ExitCode.USAGE


class StorageError(NeoEEGError):
    exit_code = ExitCode.IO


class TransportError(NeoEEGError):
    exit_code = ExitCode.IO


class ProtocolError(NeoEEGError):
    exit_code = ExitCode.PROTOCOL


class NumericError(NeoEEGError):
    exit_code = ExitCode.NUMERIC


class ShapeError(NumericError, ValueError):
    pass


class DesignError(NumericError, ValueError):
    pass


class RankDeficiencyError(NumericError, ValueError):
    pass


class EdfFormatError(StorageError, ValueError):
    pass


class WeightContainerError(StorageError, ValueError):
    pass
