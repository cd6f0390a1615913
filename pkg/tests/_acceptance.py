"""Timing and reporting for the acceptance criteria."""

import time

LOG = []


class Criterion:
    """Context manager that times one criterion and logs a pass/fail line.

    A criterion fails if its body raises or if it overruns ``limit`` seconds.
    """

    def __init__(self, number, title, limit):
        self.number = number
        self.title = title
        self.limit = limit
        self.notes = []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        overrun = elapsed >= self.limit
        ok = exc_type is None and not overrun
        detail = "; ".join(self.notes)
        if exc_type is not None:
            reason = str(exc).splitlines()[0] if str(exc) else ""
            detail += f" [{exc_type.__name__}: {reason}]"
        elif overrun:
            detail += f" [runtime {elapsed:.2f}s over limit]"
        line = (f"criterion {self.number}: {'PASS' if ok else 'FAIL'} "
                f"({elapsed:.2f}s, limit {self.limit:g}s) {self.title} | {detail}")
        LOG.append(line)
        print(line)
        if exc_type is None and overrun:
            raise AssertionError(f"criterion {self.number} took {elapsed:.2f}s, "
                                 f"limit {self.limit:g}s")
        return False
