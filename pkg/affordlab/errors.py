"""
Exception base for affordlab.

Concrete exceptions live next to the code that raises them; they all derive
from AffordLabError so the CLI can report any library failure uniformly.
"""


class AffordLabError(Exception):
    """Base class for all affordlab errors"""
    pass
