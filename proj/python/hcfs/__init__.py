"""Learned image codec: models, coding, toy training, curve comparison."""

try:
    from ._hcfs import *  # noqa: F401,F403  (installed package layout)
    from ._hcfs import __version__  # noqa: F401
except ImportError:  # development layout: extension module beside the package
    from _hcfs import *  # noqa: F401,F403
    from _hcfs import __version__  # noqa: F401
