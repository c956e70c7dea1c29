"""Open-system simulation of shortcuts to adiabaticity under action noise."""
__version__ = "0.1.0"

from .core import (  # noqa: F401
    DensityOperator, HamiltonianTrajectory, NoiseConfig, StateSeries, TimeGrid, propagate,
    stochastic_ensemble, stochastic_trajectory,
)
from .metrics import DiagnosticsReport, uhlmann_fidelity  # noqa: F401
from .tls import arp_protocol, sp_protocol  # noqa: F401
from .oscillator import (  # noqa: F401
    FrequencyProtocol, GaussianState, constant_mu_ramp, ermakov_sp, gaussian_fidelity,
    propagate_moments,
)
