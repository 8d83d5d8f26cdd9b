import os

from .errors import ConfigError


def resolve_threads(threads=None) -> int:
    """Worker count: explicit value, else ``KTRR_THREADS``, else all cores."""
    if threads is None:
        env = os.environ.get("KTRR_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"KTRR_THREADS={env!r} is not an integer") from exc
        else:
            threads = os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads
