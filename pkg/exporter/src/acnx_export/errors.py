class ExportError(Exception):
    """Anything that makes a conversion unsafe to complete."""
