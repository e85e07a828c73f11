from __future__ import annotations

from typing import Optional


class ParGraphError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code = 2


class InvalidArgumentError(ParGraphError, ValueError):
    exit_code = 2


class ConfigError(ParGraphError):
    exit_code = 1


class DataError(ParGraphError):
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, frame_id: Optional[int] = None):
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif frame_id is not None:
            prefix = f"frame {frame_id}: "
        super().__init__(prefix + message)
        self.line = line
        self.frame_id = frame_id


class NumericalError(ParGraphError):
    exit_code = 3

    def __init__(self, message: str, tensor: Optional[str] = None, frame_id: Optional[int] = None):
        super().__init__(message)
        self.tensor = tensor
        self.frame_id = frame_id
