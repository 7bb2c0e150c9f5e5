class ContractViolation(ValueError):
    """A library call was made with arguments that break its preconditions."""


class Abort(Exception):
    exit_code = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ConfigError(Abort):
    exit_code = 2


class StorageError(Abort):
    exit_code = 3


class SampleError(Abort):
    exit_code = 4
