"""Predictive braking on smooth nonplanar road surfaces.

Road geometry, the vehicle force model in squared speed and acceleration,
the multi-stage conic safety program with its own interior-point solver,
brake distribution and a closed-loop simulator.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"
