"""4D flow MRI simulation and reconstruction."""

from ._flowrecon import (
    ConfigError,
    DimensionError,
    FlowreconError,
    NumericalError,
    __version__,
    adjoint_encode,
    bland_altman,
    cli,
    coils,
    forward_encode,
    golden_angle_mask,
    linreg_corr,
    nrmse,
    parameter_count,
    phantom,
    reconstruct,
    relative_error,
    ssim,
    svt,
    velocity_decode,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "FlowreconError",
    "NumericalError",
    "__version__",
    "adjoint_encode",
    "bland_altman",
    "cli",
    "coils",
    "forward_encode",
    "golden_angle_mask",
    "linreg_corr",
    "nrmse",
    "parameter_count",
    "phantom",
    "reconstruct",
    "relative_error",
    "ssim",
    "svt",
    "velocity_decode",
]
