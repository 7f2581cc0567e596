from ._madpy import *  # noqa: F401,F403
