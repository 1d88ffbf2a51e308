"""Deep metric learning losses with analytic gradients, a deterministic
trainer, and retrieval metrics. The heavy lifting lives in the C++ core."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__, __version__  # noqa: F401
