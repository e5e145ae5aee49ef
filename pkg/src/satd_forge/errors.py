"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 2, TrainingError -> 3.
"""


class SatdForgeError(Exception):
    pass


class DataError(SatdForgeError):
    pass


class JavaLexError(DataError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class CheckpointError(DataError):
    pass


class TrainingError(SatdForgeError):
    pass
