"""Standardized CSI data protocol: simulation, sanitization, canonical tensors and evaluation."""

from ._sdp import *  # noqa: F401,F403
from ._sdp import SdpError, cli

__all__ = [name for name in dir() if not name.startswith("_")]
