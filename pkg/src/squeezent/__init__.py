"""Closed-form and dissipative entanglement dynamics of a qubit-cavity-resonator system."""

from .closedform import (
    OrthoCoefficients,
    PureTripartiteState,
    SystemParams,
    evolved_state,
    fidelity_max,
    gram_matrix,
    ortho_coefficients,
    overlap,
    squeeze_f,
)
from .measures import DensityMatrix, MeasureSet, coa, concurrence, measure_all, negativity

__version__ = "0.1.0"
