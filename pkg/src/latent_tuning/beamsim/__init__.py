"""Analytic Gaussian-mixture beam oracle."""

from .dataset import (
    DEFAULT_EXTENTS,
    DEFAULT_PAIRS,
    Dataset,
    GeneratorConfig,
    SampleRecord,
    generate_dataset,
    observe_input,
    simulate,
)
from .drift import DriftSchedule, drift_rate_estimate, drift_trajectory
from .mixture import DEFAULT_KNOB_RANGES, KNOB_NAMES, BeamState, InvalidBeamError, initial_beam
from .pca import PcaShiftReport, fit_pca, overlap_coefficient, pca_shift_report
from .projection import CollapsedProjectionError, histogram, project, project_all
from .transport import (
    DEFAULT_PARAM_RANGES,
    NEUTRAL_PARAMS,
    SystemBounds,
    TransportError,
    TransportMap,
    lipschitz_estimate,
    map_distance,
    map_from_params,
    transport,
    variation_estimate,
)
