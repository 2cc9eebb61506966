"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
front end can print ``ERROR <code>: <message>`` and pick an exit status.
"""


class SeqChoiceError(Exception):
    code = "internal"
    exit_status = 2


class DataError(SeqChoiceError):
    code = "data"


class UsageError(SeqChoiceError):
    code = "usage"
    exit_status = 1


class ConfigError(UsageError):
    code = "config"


# -- data ---------------------------------------------------------------------

class EmptyFile(DataError):
    code = "empty_file"


class MissingColumn(DataError):
    code = "missing_column"

    def __init__(self, name):
        super().__init__(f"missing column {name!r}")
        self.name = name


class BadValue(DataError):
    code = "bad_value"

    def __init__(self, row, column, detail=""):
        msg = f"bad value in row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.row = row
        self.column = column


class NonMonotonicTimestamp(DataError):
    code = "non_monotonic_timestamp"

    def __init__(self, occupant, row):
        super().__init__(f"timestamps of occupant {occupant!r} not increasing at row {row}")
        self.occupant = occupant
        self.row = row


class InvalidConfig(DataError):
    code = "invalid_config"


class EmptyDataset(DataError):
    code = "empty_dataset"


class NoFeaturesLeft(DataError):
    code = "no_features_left"


class WindowTooLong(DataError):
    code = "window_too_long"


# -- points -------------------------------------------------------------------

class InsufficientHistory(DataError):
    code = "insufficient_history"

    def __init__(self, occupant, detail=""):
        super().__init__(f"insufficient pre-game history for {occupant!r} {detail}".strip())
        self.occupant = occupant


class NonPositiveBaseline(DataError):
    code = "non_positive_baseline"


class NotEnoughParticipants(DataError):
    code = "not_enough_participants"


# -- preprocessing / models ----------------------------------------------------

class TooFewRows(DataError):
    code = "too_few_rows"


class LengthMismatch(DataError):
    code = "length_mismatch"


class KTooLarge(DataError):
    code = "k_too_large"


class TooFewMinority(DataError):
    code = "too_few_minority"


class SingleClass(DataError):
    code = "single_class"


class DimensionMismatch(DataError):
    code = "dimension_mismatch"


ShapeMismatch = DimensionMismatch


class DegenerateCovariance(DataError):
    code = "degenerate_covariance"


class BatchTooSmall(DataError):
    code = "batch_too_small"


class Diverged(DataError):
    code = "diverged"


class EmptyValidation(DataError):
    code = "empty_validation"


class WrongWindowLength(DataError):
    code = "wrong_window_length"


class UntrainedModel(DataError):
    code = "untrained_model"


class EmptySeries(DataError):
    code = "empty_series"


class SchemaMismatch(DataError):
    code = "schema_mismatch"


class StreamTooShort(DataError):
    code = "stream_too_short"


# -- stats --------------------------------------------------------------------

class DegenerateSample(DataError):
    code = "degenerate_sample"


class NonPositiveBefore(DataError):
    code = "non_positive_before"


class TooFewItems(DataError):
    code = "too_few_items"
