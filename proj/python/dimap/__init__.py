"""Deictic image mapping workbench.

Grid pick-and-place simulators, the deictic state/action abstraction, a
brute-force MDP-homomorphism verifier, and the DQN machinery behind the
`dimap` command line tool, exposed for scripting and analysis.
"""

from ._core import (
    Env,
    action_map,
    crop,
    evaluate,
    fix,
    fix_inverse,
    gradcheck,
    homcheck,
    num_reachable_states,
    prune,
    train,
)

__all__ = [
    "Env",
    "action_map",
    "crop",
    "evaluate",
    "fix",
    "fix_inverse",
    "gradcheck",
    "homcheck",
    "num_reachable_states",
    "prune",
    "train",
]
