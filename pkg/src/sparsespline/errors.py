"""Exception hierarchy shared across the package."""


class InvalidArgument(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


class LibrarySyntaxError(ValueError):
    """Raised by the library parser; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DataError(ValueError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last good time t={last_time:.6g})")
        self.last_time = last_time


class TrainingError(RuntimeError):
    def __init__(self, message: str, stage: str = "", iteration: int | None = None):
        prefix = f"[{stage}] " if stage else ""
        suffix = f" (iteration {iteration})" if iteration is not None else ""
        super().__init__(prefix + message + suffix)
        self.stage = stage
        self.iteration = iteration
