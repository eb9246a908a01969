"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: config errors exit 2, data/format
errors exit 3, numeric failures exit 4.
"""


class TruncIDMError(Exception):
    exit_code = 1


class ShapeError(TruncIDMError, ValueError):
    exit_code = 3


class ParameterError(TruncIDMError, ValueError):
    exit_code = 2


class ConfigError(ParameterError):
    exit_code = 2


class ContractError(TruncIDMError, RuntimeError):
    exit_code = 1


class NumericError(TruncIDMError, FloatingPointError):
    exit_code = 4


class TrainingError(NumericError):
    def __init__(self, msg, epoch=None):
        super().__init__(msg)
        self.epoch = epoch


class DataError(TruncIDMError, ValueError):
    exit_code = 3


class FormatError(DataError):
    """Malformed on-disk artifact (.fmap payload, model container, index CSV)."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ParseError(DataError):
    def __init__(self, msg, line=None):
        super().__init__(msg)
        self.line = line


class DuplicateIdError(DataError):
    def __init__(self, episode_id):
        super().__init__(f"duplicate episode_id {episode_id!r}")
        self.episode_id = episode_id


class MissingHeaderError(ParseError):
    pass
