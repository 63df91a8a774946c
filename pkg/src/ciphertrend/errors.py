"""Exception hierarchy for ciphertrend"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PROTOCOL = 3


class CiphertrendError(Exception):
    """Base class for all ciphertrend errors"""

    exit_code = EXIT_RUNTIME


class ParameterError(CiphertrendError):
    """Invalid ring or scheme parameters"""

    exit_code = EXIT_CONFIG


class EncodingError(CiphertrendError):
    """Value cannot be encoded at the requested level and scale"""


class HeadroomError(CiphertrendError):
    """Product scale would exceed the modulus at the current level"""


class DepthExhaustedError(CiphertrendError):
    """No level left for a multiplication or rescale"""

    def __init__(self, op: str, level: int, op_index: Optional[int] = None):
        self.op = op
        self.level = level
        self.op_index = op_index
        where = f" at op #{op_index}" if op_index is not None else ""
        super().__init__(f"Depth exhausted: {op} requested at level {level}{where}")


class AlignmentError(CiphertrendError):
    """Operands disagree on level or scale"""


class ConfidentialityError(CiphertrendError):
    """Secret-key operation requested without secret-key material"""


class MetricUndefinedError(CiphertrendError):
    """Error metric has no defined value for the given reference series"""


class DataError(CiphertrendError):
    """Malformed price input"""

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(CiphertrendError):
    """Invalid run configuration"""

    exit_code = EXIT_CONFIG


class ProtocolError(CiphertrendError):
    """Peer violated the wire protocol"""

    exit_code = EXIT_PROTOCOL

    def __init__(self, message: str, code: int = 1):
        self.code = code
        super().__init__(message)


class FrameError(ProtocolError):
    """Frame bytes could not be decoded"""


class FrameTooLargeError(FrameError):
    """Frame payload exceeds the configured cap"""


class StartupError(CiphertrendError):
    """Aggregator could not start streaming"""


class TraderConnectError(CiphertrendError):
    """Trader could not reach the aggregator"""
