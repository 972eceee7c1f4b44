from .ipm import BlockTooLarge, SolverOptions, solve
from .problem import (
    BlockLayout,
    SdpFormatError,
    SdpProblem,
    SdpSolution,
    SdpStatus,
    evaluate_solution,
)
from .sdpa import export_sdpa, export_solution, import_sdpa, import_solution

__all__ = [
    "BlockLayout", "BlockTooLarge", "SdpFormatError", "SdpProblem", "SdpSolution", "SdpStatus",
    "SolverOptions", "evaluate_solution", "export_sdpa", "export_solution", "import_sdpa",
    "import_solution", "solve",
]
