"""Exception hierarchy.

Every error carries a machine-readable ``category`` and the process exit code
the command line front end uses for it.
"""


class KtrrError(Exception):
    category = "error"
    exit_code = 1


class InputError(KtrrError, ValueError):
    """Bad arguments, bad configuration, or data violating a contract."""

    category = "input"
    exit_code = 2


class InvalidSpec(InputError):
    category = "config"


class ConfigError(InputError):
    category = "config"


class ParseError(InputError):
    category = "parse"


class ShapeMismatch(InputError):
    category = "shape"


class DimensionMismatch(ShapeMismatch):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class EmptyDataset(InputError):
    category = "data"


class MissingLabels(InputError):
    category = "data"


class NotEnoughClasses(InputError):
    category = "data"


class IndexOutOfRange(InputError, IndexError):
    category = "index"


class MemoryBudgetExceeded(InputError):
    category = "memory"


class MissingFile(KtrrError, FileNotFoundError):
    """A referenced input path does not exist."""

    category = "io"
    exit_code = 2


class StorageError(KtrrError, OSError):
    """Reading or writing a file failed after the inputs were validated."""

    category = "io"
    exit_code = 4


class NumericalError(KtrrError, ArithmeticError):
    category = "numerical"
    exit_code = 3


class EigenFailure(NumericalError):
    pass


class SolveFailure(NumericalError):
    pass


class SvdFailure(NumericalError):
    pass


class DegenerateGraph(NumericalError):
    pass
