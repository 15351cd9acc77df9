"""Convex distance inequality lab."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import run_command as _run_command


def run(command, params=None, seed=0):
    """Run a harness command and return the report as a dict (no files written)."""
    return _json.loads(_run_command(command, _json.dumps(params or {}), seed))
