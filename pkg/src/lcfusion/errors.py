"""Common base class for all toolkit errors."""


class ToolkitError(Exception):
    """Base class for every error raised by lcfusion modules."""
