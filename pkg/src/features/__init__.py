from .extractors import (
    CompositeExtractor,
    FeatureExtractor,
    FunctionExtractor,
    LinearExtractor,
    QuadraticExtractor,
    build_extractor,
    extract,
    extractor_jacobian,
)
from .terminal_cost import (
    INFINITE_GAMMA,
    GammaFlag,
    GammaWeight,
    TerminalCost,
    is_infinite,
    parse_gamma,
    terminal_cost,
    terminal_cost_grad,
)
