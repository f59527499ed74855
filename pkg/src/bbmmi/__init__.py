"""Binary branching particle systems with Moran-type interactions."""

__version__ = "0.1.0"
