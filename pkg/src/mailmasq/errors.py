"""Shared exception types."""


class InputError(ValueError):
    """Bad user input: unreadable paths, malformed records, invalid options.

    The CLI maps this to exit code 2; anything else is an internal failure.
    """


class CheckpointError(InputError):
    """Unreadable, corrupt, or incompatible checkpoint file."""
