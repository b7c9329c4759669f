"""Depth-aware rotary positional encoding along curved projected ray paths
for unified central cameras, with its supervision and scheduling machinery."""

from .attention import AttentionParams, TokenBatch, attention_forward, attention_init, modulate_key
from .camera import (
    Ray,
    RigidTransform,
    UcmCamera,
    lift_point,
    relative_transform,
    ucm_project,
    ucm_unproject,
)
from .head import HeadParams, head_backward, head_forward, head_init
from .phasor import (
    PatchRays,
    ProjectedPath,
    RadialInterval,
    breakpoints,
    expected_coefficients,
    expected_phasor,
    patch_rays,
    projected_path,
    segment_phasor,
)
from .rope import FrequencyPlan, apply_coefficients, exact_rotation, make_frequency_plan, rope_phases
from .scene import SceneSpec, TrajectorySpec, make_layer_features, make_trajectory, render_radial_map
from .supervision import (
    LossConfig,
    RadialMap,
    TokenTargets,
    near_distance_stat,
    normalize_and_pool,
    radial_loss,
    timestep_gate,
    uncertainty_scale,
    validity_mask,
)
from .teacher_mix import (
    MixSchedule,
    TeacherMixState,
    effective_interval,
    external_override,
    sample_mask,
    substitution_probability,
)

__version__ = "0.1.0"
