"""Object-model-free fusion of a dynamic occupancy grid with box tracks."""

from .association import CellGroup, associate, cells_under_footprint, grow_dynamic_region
from .config import (
    AssociationConfig,
    DynamicCellConfig,
    EvalConfig,
    FusionConfig,
    GridConfig,
    PipelineConfig,
    SelectionConfig,
    TrackerConfig,
)
from .evaluate import (
    HypRecord,
    match_frames,
    percent_rows,
    rmse_orientation,
    rmse_position,
    track_duration,
)
from .fusion import CandidateSet, build_candidates, fuse_orientation, fuse_position, visible_corner
from .geometry import Pose2D
from .grid import (
    GridCell,
    GridGeometry,
    GridMap,
    LaserScan,
    MeasurementGrid,
    classify_dynamic,
    dynamic_mask,
    grid_update,
    inverse_sensor_model,
    mahalanobis_to_static,
)
from .pipeline import RunResult, run_scenario
from .selection import SelectionState, count_dynamic_cells, select
from .sim import (
    ObjectSpec,
    Scenario,
    SensorConfig,
    load_scenario,
    resolve_scenario,
    simulate_lidar,
    simulate_radar,
)
from .tracker import BoxHypothesis, Detection, box_fit, ctrv_predict, cv_predict, track_step

__version__ = "0.1.0"
