"""Built-in catalog and scenario documents shipped with the package."""

import os

_DATA_DIR = os.path.dirname(os.path.abspath(__file__))


def builtin_path(relative: str) -> str | None:
    """Absolute path of a built-in data file, or None if there is no such file."""
    candidate = os.path.normpath(os.path.join(_DATA_DIR, relative))
    if not candidate.startswith(_DATA_DIR + os.sep):
        return None
    return candidate if os.path.isfile(candidate) else None


def resolve_input_path(path: str) -> str:
    """Resolve a user-supplied path: the filesystem wins, built-ins back it up.

    This lets `catalog/worms.json` or `scenarios/figure3.json` work verbatim
    from any working directory while real files keep priority.
    """
    if os.path.isfile(path):
        return path
    builtin = builtin_path(path)
    if builtin is not None:
        return builtin
    return path
