from typing import Optional


class SegEvalError(Exception):
    """Base class for every error raised by the evaluation toolkit"""

    def __init__(self, message: str, *, cloud_id: Optional[str] = None,
                 path: Optional[str] = None):
        self.cloud_id = cloud_id
        self.path = path
        prefix = []
        if path:
            prefix.append(f"{path}")
        if cloud_id:
            prefix.append(f"cloud '{cloud_id}'")
        if prefix:
            message = f"{': '.join(prefix)}: {message}"
        super().__init__(message)

    def attach_cloud(self, cloud_id: str) -> "SegEvalError":
        """Name the cloud in an error raised below the per-cloud layer"""
        if self.cloud_id is None:
            self.cloud_id = cloud_id
            self.args = (f"cloud '{cloud_id}': {self.args[0]}",) + self.args[1:]
        return self


class InputError(SegEvalError):
    """Invalid label arrays, empty datasets, out-of-range values"""

    def __init__(self, message: str, *, index: Optional[int] = None, **kwargs):
        self.index = index
        super().__init__(message, **kwargs)


class MergeError(SegEvalError):
    pass


class ConfigError(SegEvalError):
    pass


class AllocationError(SegEvalError):
    pass


class LoadError(SegEvalError):
    """A manifest or referenced file could not be loaded"""

    def __init__(self, message: str, *, line: Optional[int] = None,
                 field: Optional[str] = None, **kwargs):
        self.line = line
        self.field = field
        super().__init__(message, **kwargs)


class SchemaError(LoadError):
    pass


class ParseError(SegEvalError):
    """Malformed label file; carries the byte offset or line number"""

    def __init__(self, message: str, *, offset: Optional[int] = None,
                 line: Optional[int] = None, **kwargs):
        self.offset = offset
        self.line = line
        super().__init__(message, **kwargs)


class SpecError(SegEvalError):
    pass


class ComparisonError(SegEvalError):
    pass


class WriteError(SegEvalError):
    pass
