"""Complexity formulas, FLOP counting and receptive-field probes."""

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
from analysis.complexity import (
    ComplexityDims,
    ComplexityReport,
    analytic_complexity,
    flop_count_empirical,
    measure_fifm_att,
    UnknownMethodError,
)
from analysis.receptive_field import ProbeResult, receptive_field_probe, probe_layer_stack, measured_receptive_field

__all__ = [
    'ComplexityDims',
    'ComplexityReport',
    'analytic_complexity',
    'flop_count_empirical',
    'measure_fifm_att',
    'ProbeResult',
    'receptive_field_probe',
    'probe_layer_stack',
    'measured_receptive_field',
    'UnknownMethodError',
]
