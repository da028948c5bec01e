# niom/commands/__init__.py

"""
One module per CLI subcommand. Each exposes register(subparsers) and binds
its handler through set_defaults(handler=...).
"""

import functools
import sys
import traceback

from pydantic import ValidationError

# Exit codes: 2 for bad input, 1 for internal failures
EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


def command_handler(tag: str):
    """
    Wraps a handler the way route handlers wrap their bodies: input errors
    print `[<tag> ERROR] <type>: <message>` and exit 2, anything else prints
    the traceback and exits 1.
    """
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(args) -> int:
            try:
                result = fn(args)
                return EXIT_OK if result is None else int(result)
            except (ValueError, FileNotFoundError, ValidationError) as e:
                print(f"[{tag} ERROR] {type(e).__name__}: {e}", file=sys.stderr, flush=True)
                return EXIT_USAGE
            except Exception as e:
                print(f"[{tag} ERROR] {type(e).__name__}: {e}", file=sys.stderr, flush=True)
                traceback.print_exc()
                return EXIT_INTERNAL
        return wrapper
    return decorator
