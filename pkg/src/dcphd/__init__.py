"""Serial and distributed particle PHD filters for multi-target tracking."""
from .config import ConfigError, ScenarioConfig, load_config
from .dcp import Ensemble, GlobalEstimate, GroupState, ProcessEnsemble, exchange, fuse, init_ensemble, step_ensemble, step_group
from .metrics import OspaParams, RunStats, aggregate, cardinality_series, ospa
from .models import (
    BirthModel,
    ClutterModel,
    FilterModels,
    Measurement,
    MeasurementSet,
    MotionModel,
    SensorModel,
    StateVector,
    clutter_intensity,
    cv_transition,
    generate_clutter,
    likelihood,
    measure,
    sample_births,
)
from .phd import (
    LocalEstimate,
    ParticlePopulation,
    compute_normalizers,
    estimate_cardinality,
    extract_states_stphd,
    predict,
    resample,
    step_serial,
    update_stphd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
