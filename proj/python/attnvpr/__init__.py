"""Attention-guided visual place recognition: descriptors, search and evaluation."""

import os as _os

_assets = _os.path.join(_os.path.dirname(__file__), "assets")
if _os.path.isdir(_assets):
    _os.environ.setdefault("ATTNVPR_ASSET_DIR", _assets)

from ._core import *  # noqa: E402,F401,F403
from ._core import AttnvprError  # noqa: E402,F401

__version__ = "0.1.0"
