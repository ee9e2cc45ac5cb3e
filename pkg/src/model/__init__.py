from .chain import ChainParams, chain_params, normal_mode_frequencies, propagator
from .gaussian import GaussianChainState, evolve_state, evolve_trajectory, normal_mode_coherent_state, product_state

__all__ = [
    "ChainParams",
    "chain_params",
    "normal_mode_frequencies",
    "propagator",
    "GaussianChainState",
    "evolve_state",
    "evolve_trajectory",
    "normal_mode_coherent_state",
    "product_state",
]
