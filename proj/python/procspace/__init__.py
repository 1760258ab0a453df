from ._core import (
    ContractError,
    DomainError,
    Error,
    NumericError,
    ParameterError,
    ParseError,
    RangeError,
    ShapeError,
    UnsupportedError,
    check_names,
    fourier_wasserstein,
    gauge_battery,
    run,
    scenario_keys,
    sweep,
    upsilon,
    wasserstein,
)

__all__ = [
    "ContractError",
    "DomainError",
    "Error",
    "NumericError",
    "ParameterError",
    "ParseError",
    "RangeError",
    "ShapeError",
    "UnsupportedError",
    "check_names",
    "fourier_wasserstein",
    "gauge_battery",
    "run",
    "scenario_keys",
    "sweep",
    "upsilon",
    "wasserstein",
]
