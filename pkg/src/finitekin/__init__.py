"""Finite hard-sphere kinetic simulator and functional analysis toolkit."""

__version__ = "0.1.0"

from ._compat import backend_name  # noqa: F401
