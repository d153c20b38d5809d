# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

from typing import Any, Dict, Optional


class McminError(Exception):
    """Base class for every error raised by the minimisation library."""

    exit_code = 1

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self)}


class NotADistribution(McminError):
    exit_code = 4


class LabelMismatch(McminError):
    exit_code = 4

    def __init__(self, s: int, t: int, detail: str = ""):
        self.s = s
        self.t = t
        super().__init__(f"states {s} and {t} carry different labels{detail}")


class SameState(McminError):
    exit_code = 4

    def __init__(self, s: int):
        self.s = s
        super().__init__(f"pair needs two distinct states, got ({s}, {s})")


class NotLumpable(McminError):
    exit_code = 4

    def __init__(self, block: int, s: int, t: int, deviation: float):
        self.block = block
        self.s = s
        self.t = t
        self.deviation = deviation
        super().__init__(
            f"block {block} is not lumpable: states {s} and {t} differ by {deviation:.3e}"
        )

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result.update(
            {"block": self.block, "s": self.s, "t": self.t, "deviation": self.deviation}
        )
        return result


class ChainMismatch(McminError):
    exit_code = 4


class VerificationFailed(McminError):
    exit_code = 2

    def __init__(self, verdict: Any):
        self.verdict = verdict
        failures = "; ".join(getattr(verdict, "failures", [])[:3])
        super().__init__(f"certificate did not verify: {failures}")


class TooLarge(McminError):
    exit_code = 5


class ParseError(McminError):
    exit_code = 3

    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result.update({"path": self.path, "line": self.line})
        return result


class NonStochasticRow(McminError):
    exit_code = 3

    def __init__(self, state: int, total: float):
        self.state = state
        self.total = total
        super().__init__(f"row of state {state} sums to {total!r}")

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result.update({"state": self.state, "sum": self.total})
        return result


class SchemaVersionMismatch(McminError):
    exit_code = 4

    def __init__(self, found: Any, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"schema version {found!r} is not supported (expected {expected})")


class ValidationError(McminError):
    exit_code = 4
