from .sphere_geom import (
    SphereCoord,
    UnitDirection,
    DirectionScheme,
    DirectionSet,
    IcosphereTemplate,
    omega,
    to_sphere,
    to_cartesian,
    sample_directions,
    icosphere,
)
from .sph_harmonics import ShExpansion, ShFit, eval_basis, eval_expansion, fit_expansion
from .diff_engine import Tensor, MlpParams, AdamState, GradCheck, mlp_forward, adam_step, grad_check, no_grad
from .nsd import IndicatorConfig, NsdPrimitive, radius, indicator, surface_point, signed_distance, normal
from .assembly import (
    PrimitiveAssembly,
    SurfaceSampleSet,
    composite_indicator,
    extract_surface,
    collective_normals,
    assemble_mesh,
    marching_cubes,
)
from .losses import surface_loss, occupancy_loss, overlap_regularizer, total_loss
from .shape_io import TriangleMesh, ShapeSample, NormalizationTransform, load_mesh, save_mesh, sample_shape
from .config import LossWeights, FitConfig, MetricOptions, SampleConfig, MeshOptions, RunConfig
from .fitting import FitReport, LossRecord, fit, grid_search_tau_o, fit_radius
from .metrics import MetricReport, fscore, chamfer_l1, volumetric_iou, gaussian_curvature, label_transfer, evaluate
from .persistence import CheckpointRepository, ReportRepository
from .exceptions import (
    ValidationError,
    NotFoundError,
    DataIntegrityError,
    MeshFormatError,
    NumericalError,
    RankDeficientError,
    DegenerateGeometryError,
)

from .utils import write_json, read_json

__all__ = [
    "SphereCoord",
    "UnitDirection",
    "DirectionScheme",
    "DirectionSet",
    "IcosphereTemplate",
    "omega",
    "to_sphere",
    "to_cartesian",
    "sample_directions",
    "icosphere",
    "ShExpansion",
    "ShFit",
    "eval_basis",
    "eval_expansion",
    "fit_expansion",
    "Tensor",
    "MlpParams",
    "AdamState",
    "GradCheck",
    "mlp_forward",
    "adam_step",
    "grad_check",
    "no_grad",
    "IndicatorConfig",
    "NsdPrimitive",
    "radius",
    "indicator",
    "surface_point",
    "signed_distance",
    "normal",
    "PrimitiveAssembly",
    "SurfaceSampleSet",
    "composite_indicator",
    "extract_surface",
    "collective_normals",
    "assemble_mesh",
    "marching_cubes",
    "surface_loss",
    "occupancy_loss",
    "overlap_regularizer",
    "total_loss",
    "TriangleMesh",
    "ShapeSample",
    "NormalizationTransform",
    "load_mesh",
    "save_mesh",
    "sample_shape",
    "LossWeights",
    "FitConfig",
    "MetricOptions",
    "SampleConfig",
    "MeshOptions",
    "RunConfig",
    "FitReport",
    "LossRecord",
    "fit",
    "grid_search_tau_o",
    "fit_radius",
    "MetricReport",
    "fscore",
    "chamfer_l1",
    "volumetric_iou",
    "gaussian_curvature",
    "label_transfer",
    "evaluate",
    "CheckpointRepository",
    "ReportRepository",
    "ValidationError",
    "NotFoundError",
    "DataIntegrityError",
    "MeshFormatError",
    "NumericalError",
    "RankDeficientError",
    "DegenerateGeometryError",
]
