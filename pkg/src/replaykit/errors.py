"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems (bad files, bad
values, contract violations) exit with 2, sequencing problems (running a
stage whose predecessors have not been completed) exit with 3.
"""


class ReplaykitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ReplaykitError):
    """Input violates a documented contract (bad value, bad schema, bad state file)."""


class ParseError(ValidationError):
    """A data file could not be parsed; message carries the line number."""


class FormatError(ValidationError):
    """A data file parsed but violates its format contract (e.g. ragged vectors)."""


class MissingEmbeddingError(ValidationError):
    """A required key has no embedding row; message names the key."""

    def __init__(self, key: str):
        super().__init__(f"no embedding for key: {key!r}")
        self.key = key


class SplitError(ValidationError):
    """A holdout split was requested on a dataset too small to split."""


class PoolStateError(ReplaykitError):
    """Instruction pool used inconsistently (e.g. double insertion of a task)."""


class PoolLookupError(ReplaykitError):
    """An instruction was scored against a pool that does not contain it."""


class SequencingError(ReplaykitError):
    """A pipeline stage was requested before its predecessors completed."""
