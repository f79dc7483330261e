"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MalfamError(Exception):
    exit_code = 1


class ConfigError(MalfamError):
    """Bad configuration: unknown model ids, invalid tables, missing inputs."""

    exit_code = 1


class DataValidationError(MalfamError):
    """Malformed or inconsistent data files."""

    exit_code = 2


class CacheMissError(DataValidationError):
    def __init__(self, keys):
        self.keys = list(keys)
        shown = ", ".join(f"({s}, {m}, {p})" for s, m, p in self.keys[:20])
        more = f" (+{len(self.keys) - 20} more)" if len(self.keys) > 20 else ""
        super().__init__(f"cache miss for {len(self.keys)} key(s): {shown}{more}")


class TransportError(MalfamError):
    """Provider call failed after exhausting retries."""

    exit_code = 3

    def __init__(self, message: str, status=None, retryable: bool = True):
        super().__init__(message)
        self.status = status
        self.retryable = retryable
