import logging
import multiprocessing as mp

from typing import Any, Callable, Iterable, List, Sequence, Union

from . import errors


class Process(mp.Process):
    """A process that sends back either its result or its exception."""

    def __init__(self, *args, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self._pconn, self._cconn = mp.Pipe(duplex=False)
        self._outcome = None
        self._received = False

    def run(self) -> None:
        try:
            result = self._target(*self._args, **self._kwargs)
            self._cconn.send((True, result))
        except Exception as e:
            self._cconn.send((False, e))

    def outcome(self) -> Any:
        """Blocks until the child reports; must be called before ``join``
        so large results do not fill the pipe."""

        if not self._received:
            ok, value = self._pconn.recv()
            self._outcome = value if ok else as_program_error(value)
            self._received = True
        return self._outcome


def as_program_error(error: Exception) -> errors.BaseError:
    if isinstance(error, errors.BaseError):
        return error
    return errors.InternalError(error)


class Executor:
    """Runs independent tasks, in child processes when ``workers > 1``.

    Results keep task order; a failed task yields its (wrapped) exception
    in place of a result so one bad seed does not abort a sweep.
    """

    def __init__(self, workers: int = 1, logger: logging.Logger = None) -> None:
        self.workers = max(1, int(workers))
        self.logger = logger or logging.getLogger(self.__class__.__name__)

    def _run_inline(self, fn: Callable, args: Sequence) -> Any:
        try:
            return fn(*args)
        except errors.BaseError as error:
            return error
        except Exception as error:
            self.logger.error('Uncaught error! "%s"', str(error))
            return errors.InternalError(error)

    def map(self, fn: Callable, tasks: Iterable[Sequence]) -> List[Union[Any, errors.BaseError]]:
        tasks = [tuple(t) for t in tasks]
        if self.workers == 1 or len(tasks) <= 1:
            return [self._run_inline(fn, args) for args in tasks]

        self.logger.debug('Running %d tasks on %d processes', len(tasks), self.workers)
        results: List[Any] = []
        for start in range(0, len(tasks), self.workers):
            batch = [Process(target=fn, args=args) for args in tasks[start:start + self.workers]]
            for process in batch:
                process.start()
            for process in batch:
                results.append(process.outcome())
                process.join()
        return results
