"""NTK-preserving MLP fusion: python surface of the C++ core."""

from ._mlpfuse import *  # noqa: F401,F403
from ._mlpfuse import __doc__  # noqa: F401
