"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI maps it to (1 usage/config, 2 data, 3 numerical).
"""


class Boot3dError(Exception):
    code = "error"
    exit_code = 1


class InvalidConfigError(Boot3dError):
    code = "invalid-config"
    exit_code = 1


class InvalidInputError(Boot3dError):
    code = "invalid-input"
    exit_code = 2


class FormatError(InvalidInputError):
    code = "bad-format"


class MissingLandmarkError(InvalidInputError):
    code = "missing-landmark"


class UnknownImageError(InvalidInputError):
    code = "unknown-image"


class DegenerateInputError(Boot3dError):
    code = "degenerate-input"
    exit_code = 3


class DegenerateAlignmentError(DegenerateInputError):
    code = "degenerate-alignment"
