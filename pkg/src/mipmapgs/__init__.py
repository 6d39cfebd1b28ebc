"""Differentiable Gaussian splatting with zoom-specific test-time adaptation."""
from .adapt import AdaptConfig, AdaptReport, ViewSource, adapt, select_views
from .camera import Camera, as_zoom, scale_camera
from .exceptions import (
    DegenerateCovariance,
    DimensionMismatch,
    EmptyScene,
    EmptySceneWarning,
    EmptyViewSet,
    InvalidConfig,
    InvalidFactor,
    InvalidZoom,
    MipmapGSError,
    NonFiniteGradient,
    SceneFormatError,
    TooSmall,
)
from .fit import FitConfig, FitReport, fit
from .gaussians import Gaussian3D, Scene, build_covariance, eval_gaussian3, eval_sh_color
from .io import load_scene, save_scene
from .metrics import MetricReport, evaluate, psnr, ssim
from .mipmap import ResampleSpec, downsample, make_pseudo_gt, upsample
from .optim import (
    AdamState,
    DensityControlConfig,
    DensityStats,
    LossKind,
    active_prune,
    adam_step,
    compute_loss,
    densify_and_prune,
)
from .projection import FilterMode, Splat2D, project_gaussian, splat_alpha
from .rasterizer import RenderConfig, SceneGradients, render, render_backward, render_bruteforce
from .scenegen import TeacherSpec, Toy1DSpec, generate_teacher, teacher_image, toy1d

__version__ = "0.1.0"
