"""Python access to the coldscatter engine."""

from ._core import (
    ConfigError,
    DomainError,
    NumericError,
    __version__,
    clebsch_gordan,
    parse_config,
    run,
    schmidt_coefficient,
    scenario_names,
    self_consistent_epsilon,
    single_atom_cross_section,
    slab_transmittance,
    truncated_norm,
    wigner_3j,
    wigner_6j,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "NumericError",
    "__version__",
    "clebsch_gordan",
    "parse_config",
    "run",
    "schmidt_coefficient",
    "scenario_names",
    "self_consistent_epsilon",
    "single_atom_cross_section",
    "slab_transmittance",
    "truncated_norm",
    "wigner_3j",
    "wigner_6j",
]
