"""
Tagged console logging.

Messages look like ``[INFO] ...`` / ``[WARN] ...`` and go through
``tqdm.write`` so they never tear an active progress bar.
"""
import sys

from tqdm import tqdm

_LEVELS = {"quiet": 0, "normal": 1, "debug": 2}
_verbosity = _LEVELS["normal"]


def set_verbosity(level):
    global _verbosity
    if level not in _LEVELS:
        raise ValueError(f"Unknown verbosity '{level}' (expected one of {sorted(_LEVELS)})")
    _verbosity = _LEVELS[level]


def get_verbosity():
    for name, value in _LEVELS.items():
        if value == _verbosity:
            return name
    return "normal"


def _emit(tag, msg, stream):
    tqdm.write(f"[{tag}] {msg}", file=stream)


def debug(msg):
    if _verbosity >= _LEVELS["debug"]:
        _emit("DEBUG", msg, sys.stdout)


def info(msg):
    if _verbosity >= _LEVELS["normal"]:
        _emit("INFO", msg, sys.stdout)


def warn(msg):
    _emit("WARN", msg, sys.stderr)


def error(msg):
    _emit("ERROR", msg, sys.stderr)


def progress(iterable, desc, total=None, enabled=False):
    """Wrap a trial loop in a tqdm bar; disabled unless asked for and not quiet."""
    return tqdm(iterable, desc=desc, total=total, leave=False,
                disable=not enabled or _verbosity == _LEVELS["quiet"])
