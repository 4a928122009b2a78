"""Exception types shared across the package."""


class GazeboxError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GazeboxError, ValueError):
    """A domain value violated an invariant at construction.

    Attributes:
        field: Name of the offending field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsortedInputError(GazeboxError):
    """An input sequence violated an ordering precondition."""


class DimensionMismatchError(GazeboxError):
    """Grids with incompatible dimensions were combined."""


class FixationOutsideImageError(GazeboxError):
    """A fixation center fell outside the image rectangle."""


class EllipseOutsideImageError(GazeboxError):
    """An annotated ellipse does not intersect the image rectangle."""


class UnknownLabelError(GazeboxError, KeyError):
    """A label is missing from the lexicon."""


class EmptyEvalSetError(GazeboxError):
    """A metric over an empty collection of evaluation pairs is undefined."""


class MissingLabelError(GazeboxError):
    """A per-class metric was requested on unlabeled pairs."""


class StudyProcessingError(GazeboxError):
    """A per-study pipeline step failed; wraps the cause with the study id.

    Attributes:
        study_id: The study being processed when the failure occurred.
    """

    def __init__(self, study_id: str, cause: Exception):
        super().__init__(f"study {study_id!r}: {cause}")
        self.study_id = study_id


class SchemaError(GazeboxError):
    """An input file's header does not match the expected schema."""


class RowError(GazeboxError):
    """A malformed row in an input file.

    Collected during parsing rather than raised immediately; parsing aborts
    only when the configured error limit is exceeded.

    Attributes:
        line_no: 1-based line number of the offending row.
    """

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TooManyRowErrorsError(GazeboxError):
    """Parsing aborted because the per-file row error limit was exceeded."""

    def __init__(self, path: str, errors: list[RowError]):
        super().__init__(
            f"{path}: aborted after {len(errors)} malformed rows "
            f"(first: {errors[0] if errors else 'n/a'})"
        )
        self.errors = errors
