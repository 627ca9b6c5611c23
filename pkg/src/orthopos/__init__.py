"""Group-structured positional operators for attention.

Paths through sequences, k-ary trees, and regular grids form groups;
interpreting their generators as orthogonal matrices yields positional
encodings that respect the source structure.  This package provides the
path algebra, the orthogonal-matrix core, batch encoders, reference and
factored attention-score kernels, rotary-angle interop, and a CLI.
"""

from .attention import (
    AttentionBatch,
    DecayConfig,
    DecayForm,
    apply_distance_decay,
    distance_matrix,
    modulated_attention,
    modulated_scores_fast,
    modulated_scores_naive,
    permutation_invariance_check,
    relative_tensor,
    score_gradient,
    vanilla_attention,
)
from .encoders import (
    GroupInterpretation,
    PositionTensor,
    direct_sum,
    grid_positions,
    head_interpretations,
    interpret,
    interpretation_from_params,
    make_periodic_generator,
    near_identity_params,
    position_matrices,
    random_interpretation,
    random_params,
    seq_powers,
    subsampled_positions,
    tree_positions,
)
from .errors import (
    DecompositionFailed,
    DimensionError,
    DimensionSplitError,
    InvalidGenerator,
    InvalidParameter,
    InvalidPositionTensor,
    InversionUnavailable,
    LogFailed,
    NotOrthogonal,
    NotSpecialOrthogonal,
    OrthoposError,
    StructureMismatch,
)
from .orthogonal import (
    CanonicalForm,
    Fixed,
    Flip,
    GeneratorParam,
    OrthogonalMatrix,
    Rotation,
    SkewSymmetric,
    canonical_form,
    fit_skew_parameter,
    matrix_exp,
    matrix_exp_frechet,
    matrix_log_orthogonal,
    orthogonality_defect,
    skew_symmetrize,
)
from .paths import (
    AbsolutePosition,
    Kind,
    Mode,
    PathWord,
    StructureSpec,
    compose,
    embed,
    format_word,
    identity_word,
    invert,
    parse_position,
    parse_word,
    path_length,
    reduce_word,
    relative_path,
)
from .rotary import (
    RotarySpec,
    angles_to_generator,
    apply_rotary,
    default_angle_ladder,
    generator_to_angles,
    rotation_block_matrix,
    score_agreement,
)
from .tensorio import dump_bytes, load_bytes, read_tensor, write_tensor

__version__ = "0.1.0"
