"""Concrete model families."""

from .birth_death import (BirthDeathSpec, bd_killed_make, bd_make, benchmark, constant_kill,
                          single_state)
from .finite import FiniteJumpModel, StateSpaceOverflow

__all__ = [
    "BirthDeathSpec", "FiniteJumpModel", "StateSpaceOverflow", "bd_killed_make", "bd_make",
    "benchmark", "constant_kill", "single_state",
]
