"""Linear transports along paths in vector and tensor bundles."""

from .derivation import (
    SectionAlongPath,
    covariant_decomposition,
    derivation_apply,
    derivation_limit_check,
    is_l_transported,
    leibniz_check,
    solve_transport_equation,
    tensor_derivation,
)
from .errors import (
    ChartBoundsError,
    EvaluationDomainError,
    ExpressionError,
    IntegrationError,
    NumericalError,
    PathliftError,
    SceneError,
    SingularMatrixError,
    ValidationError,
)
from .expr import evaluate, parse_expression
from .geometry import (
    Chart,
    ConnectionField,
    FrameField,
    PathCurve,
    connection_coefficients,
    expression_connection,
    flat_connection,
    frame_change_matrix,
    make_path,
    sphere_chart,
    sphere_connection,
    sphere_rotation_angle,
)
from .lpath import (
    LPathProblem,
    LPathSolution,
    coefficient_provider,
    geodesic_provider,
    lpath_residual,
    solve_lpath,
    special_frame_linearity,
)
from .scene import Scene, load_scene, parse_scene, serialize_scene
from .tensors import (
    FULL,
    PRODUCT,
    TensorComponents,
    TensorTransportRule,
    check_consistency,
    contract,
    scalar_transport,
    tensor_product,
    transport_tensor,
)
from .transport import (
    CoefficientField,
    TransportGenerator,
    TransportMatrixFamily,
    change_transport_frame,
    coefficients_from_generator,
    coefficients_in_frame,
    holonomy,
    matrix_from_coefficients,
    matrix_from_generator,
    parallel_coefficients,
    parallel_transport,
    special_frame,
    transport_vector,
)

__version__ = "0.1.0"

__all__ = [
    "change_transport_frame",
    "Chart",
    "ChartBoundsError",
    "check_consistency",
    "coefficient_provider",
    "CoefficientField",
    "coefficients_from_generator",
    "coefficients_in_frame",
    "connection_coefficients",
    "ConnectionField",
    "contract",
    "covariant_decomposition",
    "derivation_apply",
    "derivation_limit_check",
    "evaluate",
    "EvaluationDomainError",
    "expression_connection",
    "ExpressionError",
    "flat_connection",
    "frame_change_matrix",
    "FrameField",
    "FULL",
    "geodesic_provider",
    "holonomy",
    "IntegrationError",
    "is_l_transported",
    "leibniz_check",
    "load_scene",
    "lpath_residual",
    "LPathProblem",
    "LPathSolution",
    "make_path",
    "matrix_from_coefficients",
    "matrix_from_generator",
    "NumericalError",
    "parallel_coefficients",
    "parallel_transport",
    "parse_expression",
    "parse_scene",
    "PathCurve",
    "PathliftError",
    "PRODUCT",
    "scalar_transport",
    "Scene",
    "SceneError",
    "SectionAlongPath",
    "serialize_scene",
    "SingularMatrixError",
    "solve_lpath",
    "solve_transport_equation",
    "special_frame",
    "special_frame_linearity",
    "sphere_chart",
    "sphere_connection",
    "sphere_rotation_angle",
    "tensor_derivation",
    "tensor_product",
    "TensorComponents",
    "TensorTransportRule",
    "transport_tensor",
    "transport_vector",
    "TransportGenerator",
    "TransportMatrixFamily",
    "ValidationError",
]
