"""Error hierarchy for the localization pipeline.

Every error carries the process exit code the command line reports for it:
1 for usage/configuration problems, 2 for data or format problems and 3 for
numeric failures.
"""


class AnglocError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 2


class InvalidInputError(AnglocError, ValueError):
    """Input values violate an operation's precondition."""


class InvalidConfigError(AnglocError, ValueError):
    """A configuration object violates its invariants."""

    exit_code = 1


class InvalidBoundsError(InvalidInputError):
    """Rescale bounds are empty or inverted."""


class PreconditionError(InvalidInputError):
    """Not enough data to run the requested operation."""


class DegenerateInputError(AnglocError, ValueError):
    """Input is numerically degenerate (constant samples, zero power, zero entries)."""

    exit_code = 3


class InstabilityError(AnglocError, ValueError):
    """An AR model has poles on or outside the unit circle."""

    exit_code = 3


class NoPeakError(AnglocError, ValueError):
    """A pseudo-spectrum has no local maximum."""

    exit_code = 3


class IncompleteSurveyError(AnglocError, KeyError):
    """A reference point lacks a trace for one of the access points."""

    def __init__(self, rp_id: str, ap_id: str):
        self.rp_id = rp_id
        self.ap_id = ap_id
        super().__init__(f"Reference point {rp_id!r} has no trace for access point {ap_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class TraceFormatError(AnglocError, ValueError):
    """A binary trace or capture file is malformed.

    Attributes:
        offset: Byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class CorruptRecordError(TraceFormatError):
    """An Intel 5300 CSI record declares an inconsistent payload length."""
