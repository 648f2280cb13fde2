"""Quantum Fisher information bounds, covariant phase-estimation risk and
Monte Carlo estimator simulation for one-parameter quantum channel families."""

__version__ = "0.1.0"

from .channel import (ChannelFamily, ChoiPair, apply_with_ancilla, choi_pair, exponential_phase_damping,
                      make_coin_family, make_depolarizing_family, make_phase_damping_family,
                      make_shift_mixture_family, make_unitary_family, tensor_families, tensor_power)
from .fisher import (INFINITE, additivity_residual, condition_c, fisher_for_input, is_infinite, max_rld_channel,
                     optimize_sld_input, rld_fisher, sld, sld_fisher, superadditivity_check)
from .phase import covariant_minimax_risk, phase_bounds_report

__all__ = [
    "ChannelFamily", "ChoiPair", "apply_with_ancilla", "choi_pair", "exponential_phase_damping", "make_coin_family",
    "make_depolarizing_family", "make_phase_damping_family", "make_shift_mixture_family", "make_unitary_family",
    "tensor_families", "tensor_power", "INFINITE", "additivity_residual", "condition_c", "fisher_for_input",
    "is_infinite", "max_rld_channel", "optimize_sld_input", "rld_fisher", "sld", "sld_fisher",
    "superadditivity_check", "covariant_minimax_risk", "phase_bounds_report",
]
