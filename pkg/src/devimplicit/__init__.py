"""Developable neural implicit surfaces.

Fits a signed-distance field to an oriented point cloud and fine-tunes it
with rank-minimization regularizers on the field Hessian so the zero
iso-surface approaches piecewise developability; extraction and evaluation
round out the pipeline.
"""

__version__ = "0.1.0"

from .cloud import (
    NormalizationTransform,
    PointCloud,
    SamplingConfig,
    SdfSampleSet,
    add_noise,
    load_cloud,
    make_samples,
    normalize_unit_box,
    save_cloud,
)
from .curvature import (
    GRADIENT_FLOOR,
    CurvatureSample,
    bordered_det,
    bordered_matrix,
    gauss_K,
    mean_M,
    principal,
)
from .errors import (
    CloudParseError,
    ConfigurationError,
    DegenerateInputError,
    DevImplicitError,
    DimensionError,
    EmptyBatchError,
    NonManifoldError,
    SingularPointError,
    StateError,
    TrainingDivergedError,
)
from .jets import GradAccumulator, Jet2, LayerJets, backward_params, jet_activate, jet_affine
from .meshing import MeshingConfig, TriangleMesh, load_mesh, marching_cubes, mesh_stats, save_mesh
from .metrics import (
    EvalReport,
    RigidTransform,
    angle_deficit,
    chamfer,
    export_histogram,
    icp_align,
    implicit_curvature_stats,
    sample_surface,
)
from .mlp import (
    MlpParams,
    NetworkConfig,
    eval_batch,
    eval_jet,
    eval_jet_batch,
    eval_sdf,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
)
from .regularizers import (
    RegularizerConfig,
    loss_hdet,
    loss_logdet,
    loss_nn,
    loss_pnn,
    reg_loss,
)
from .spectral import SingularSpectrum, spectrum
from .training import (
    AdamState,
    LossReport,
    TrainingConfig,
    adam_step,
    clamp,
    data_loss,
    finetune_stage,
    fit_stage,
    total_loss,
)
