from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Union


class BaseError(Exception):
    """The base class for all program-specific errors."""

    exit_code = 1

    def __init__(self, msg: str) -> None:
        super().__init__(msg)
        self.msg = msg
        self.name = self.__class__.__name__

    def __str__(self) -> str:
        return self.msg

    def __reduce__(self):
        # subclasses take other constructor args; sent whole across process pipes
        return _restore, (self.__class__, self.__dict__.copy())


def _restore(cls: type, state: dict) -> BaseError:
    error = cls.__new__(cls)
    Exception.__init__(error, state.get('msg', ''))
    error.__dict__.update(state)
    return error


class InternalError(BaseError):
    """A wrapper for any other default Python exceptions."""

    def __init__(self, source: Exception) -> None:
        self.orig_name = source.__class__.__name__
        super().__init__(f'Internal error {self.orig_name}: "{source}"')


class ValidationError(BaseError):
    """Raised when inputs violate a documented precondition."""

    exit_code = 2


class NumericalError(BaseError):
    """Raised when a computation produces non-finite values."""

    exit_code = 3


class IOFailure(BaseError):
    """Raised on file system errors."""

    exit_code = 4


class ConfigError(ValidationError):
    pass


class ScheduleGapError(ValidationError):
    """Raised if monthly diluent totals skip a calendar month."""

    def __init__(self, after: str, found: str) -> None:
        self.after = after
        self.found = found
        super().__init__(f'Monthly totals are not contiguous: {after} is followed by {found}.')


class FormatError(ValidationError):
    """Raised if an input file does not follow the expected schema."""

    def __init__(self, what: str, path: Union[str, Path, None] = None) -> None:
        self.path = path
        super().__init__(f'{what}' + (f' ("{path}")' if path else ''))


class EmptyInputError(ValidationError):

    def __init__(self, what: str) -> None:
        super().__init__(f'Empty input: {what}.')


class UninterpolatableChannelError(ValidationError):
    """Raised if a daily channel has fewer than two known values."""

    def __init__(self, channel: str, known: int) -> None:
        self.channel = channel
        self.known = known
        super().__init__(
            f'Channel "{channel}" has {known} known daily value(s); '
            'at least 2 are required for interpolation.'
        )


class AlignmentError(ValidationError):
    """Raised if two daily sources do not cover the same dates."""

    def __init__(self, what: str, missing: Iterable[date] = ()) -> None:
        self.missing = tuple(missing)
        shown = ', '.join(str(d) for d in self.missing[:10])
        more = f' (+{len(self.missing) - 10} more)' if len(self.missing) > 10 else ''
        super().__init__(f'{what}: missing dates {shown}{more}' if self.missing else what)


class ShapeError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class UnsanitizableError(ValidationError):
    """Raised if the first simulated day is already unrealistic."""

    def __init__(self, day: date) -> None:
        self.day = day
        super().__init__(f'Trajectory cannot be sanitized: first day {day} is not realistic.')


class NumericalBlowupError(NumericalError):
    """Raised if the ODE state becomes non-finite."""

    def __init__(self, species: str, day: Optional[date] = None) -> None:
        self.species = species
        self.day = day
        where = f' on {day}' if day is not None else ''
        super().__init__(f'Numerical blow-up in "{species}"{where}.')


class DivergenceError(NumericalError):
    """Raised if training produces non-finite gradients or losses."""

    def __init__(self, epoch: int, last_report=None) -> None:
        self.epoch = epoch
        self.last_report = last_report
        super().__init__(f'Training diverged at epoch {epoch}.')


class OpenFileError(IOFailure):
    """Raised on I/O errors when trying to read a file."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = path
        super().__init__(
            'Could not open the file. ' +
            (f'Is the path correct?\n"{path}"' if path else 'The path is empty!')
        )


class WriteFileError(IOFailure):
    """Raised on I/O errors when trying to write a file."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = path
        super().__init__(
            'Could not write the file. The path may be incorrect '
            f'or the current user lacks permissions.\n"{path}"'
        )


class ArtifactError(IOFailure):
    """Raised if a model artifact is incomplete or has an unknown version."""

    def __init__(self, what: str, path: Union[str, Path, None] = None) -> None:
        self.path = path
        super().__init__(f'Invalid model artifact: {what}' + (f' ("{path}")' if path else ''))
