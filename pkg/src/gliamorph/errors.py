"""Exception hierarchy shared by every stage.

Each error carries the stage that raised it, a remediation hint and the CLI
exit code it maps to (2 config, 3 input, 4 processing).
"""
from __future__ import annotations


class GliaError(Exception):
    exit_code = 4
    module = "gliamorph"
    hint = ""

    def __init__(self, message: str, *, module: str | None = None, hint: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module
        if hint is not None:
            self.hint = hint


class ConfigError(GliaError, ValueError):
    exit_code = 2
    module = "cli"
    hint = "check the config file and command-line flags"


class InputError(GliaError):
    exit_code = 3
    hint = "check that the input files exist and follow the expected format"


class EmptyInputError(InputError, ValueError):
    hint = "provide at least one slice, voxel or record"


class DimensionMismatchError(InputError, ValueError):
    module = "volume_io"
    hint = "all slices of a stack must share the same width and height"


class FormatError(InputError, ValueError):
    module = "volume_io"
    hint = "use 8- or 16-bit single-channel grayscale images"


class SchemaError(InputError, ValueError):
    module = "compare"
    hint = "the CSV header must contain every required column"


class RowError(InputError, ValueError):
    module = "compare"

    def __init__(self, message: str, line: int, **kw):
        super().__init__(f"line {line}: {message}", **kw)
        self.line = line


class ProcessingError(GliaError):
    exit_code = 4


class ResolutionError(ProcessingError, ValueError):
    module = "phantom"
    hint = "use a radius of at least one voxel pitch or a finer spacing"


class CapacityError(ProcessingError):
    module = "phantom"
    hint = "lower k or min_gap, or enlarge the grid"


class DegenerateHistogramError(ProcessingError, ValueError):
    module = "segmentation"
    hint = "the volume is constant; pass an explicit threshold value"


class ContractError(ProcessingError, ValueError):
    module = "skeleton"
    hint = "skeletonize one 26-connected cell mask at a time"


class UnitError(GliaError, ValueError):
    exit_code = 2
    module = "compare"
    hint = "pass --um-per-px to convert pixel coordinates to microns"
