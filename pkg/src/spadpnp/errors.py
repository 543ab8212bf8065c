"""Exception hierarchy shared across the package."""


class SpadPnPError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SpadPnPError, ValueError):
    def __init__(self, message: str, axis: str | None = None):
        super().__init__(message)
        self.axis = axis


class OutOfRange(SpadPnPError, ValueError):
    pass


class InvalidValue(SpadPnPError, ValueError):
    """NaN/Inf or negative entries where they are not allowed."""


class DegenerateScene(SpadPnPError, ValueError):
    pass


class EmptyInput(SpadPnPError, ValueError):
    pass


class EmptyMask(SpadPnPError, ValueError):
    pass


class SRFailure(SpadPnPError, RuntimeError):
    """Raised when the super-resolution stage fails inside the solver.

    ``diagnostics`` holds whatever the solver had recorded before the failure.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PluginError(SpadPnPError, RuntimeError):
    pass


class PluginExit(PluginError):
    def __init__(self, returncode: int, stderr: str):
        super().__init__(f"plugin exited with code {returncode}: {stderr.strip()[-2000:]}")
        self.returncode = returncode
        self.stderr = stderr


class PluginFormat(PluginError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class PluginRange(PluginError):
    pass


class SptFormatError(SpadPnPError, ValueError):
    pass


class ConfigError(SpadPnPError, ValueError):
    """Invalid run configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


class DegenerateGuideWarning(UserWarning):
    """Guide image is constant; guided upsampling falls back to spline interpolation."""
