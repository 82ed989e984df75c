"""Gaussian-state simulation of squeezed light, homodyne conditioning and magnetometry.

Submodules:

``gaussian``       labelled multimode Gaussian states and their operations
``riccati``        matrix Riccati flows: integration and steady states
``opo``            the degenerate OPO below threshold, segment by segment
``collective``     collective quadratures of the retained output
``filter_cavity``  detuned analysis cavity fed by the OPO output
``magnetometry``   field estimation with coherent, squeezed and OPO probes
``cli``            command-line front end
"""

from .gaussian import (
    CompiledCycle,
    GaussianState,
    HomodyneOutcome,
    Label,
    PhysicalityReport,
    StepMatrix,
    apply_linear,
    attach_block,
    attach_squeezed,
    attach_vacuum,
    check_physical,
    condition_homodyne,
    new_vacuum,
    sample_homodyne,
    segment_cycle,
    trace_out,
)
from .riccati import (
    CovTrajectory,
    RiccatiConvergenceError,
    RiccatiDivergenceError,
    RiccatiSystem,
    continuum_riccati,
    integrate,
    integrate_linearized,
    steady_state,
)
from .opo import Measured, OpoParams
from .filter_cavity import FilterParams
from .magnetometry import MagnetometryParams, Probe

__version__ = "0.1.0"

__all__ = [
    "CompiledCycle",
    "GaussianState",
    "HomodyneOutcome",
    "Label",
    "PhysicalityReport",
    "StepMatrix",
    "apply_linear",
    "attach_block",
    "attach_squeezed",
    "attach_vacuum",
    "check_physical",
    "condition_homodyne",
    "new_vacuum",
    "sample_homodyne",
    "segment_cycle",
    "trace_out",
    "CovTrajectory",
    "RiccatiConvergenceError",
    "RiccatiDivergenceError",
    "RiccatiSystem",
    "continuum_riccati",
    "integrate",
    "integrate_linearized",
    "steady_state",
    "Measured",
    "OpoParams",
    "FilterParams",
    "MagnetometryParams",
    "Probe",
]
