"""Multitype spatial point pattern analysis."""

from ._mtpp import (
    DesignSpec,
    Error,
    NumericalError,
    Pattern,
    RegionSet,
    Scenario,
    Window,
    __version__,
    center_l,
    default_r_max,
    envelope_test,
    fit,
    global_envelope,
    inhom_k,
    intensity_at_points,
    intensity_surface,
    main,
    max_threads,
    min_simulations,
    r_grid,
    scott_bandwidth,
    set_max_threads,
)

__all__ = [
    "DesignSpec",
    "Error",
    "NumericalError",
    "Pattern",
    "RegionSet",
    "Scenario",
    "Window",
    "__version__",
    "center_l",
    "default_r_max",
    "envelope_test",
    "fit",
    "global_envelope",
    "inhom_k",
    "intensity_at_points",
    "intensity_surface",
    "main",
    "max_threads",
    "min_simulations",
    "r_grid",
    "scott_bandwidth",
    "set_max_threads",
]
