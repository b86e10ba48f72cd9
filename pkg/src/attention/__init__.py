from .aggregation import (
    AttentionBranch,
    QueryBlock,
    COMPOSE_COMBINATIONS,
    STYLIZE_COMBINATIONS,
    afa_compose,
    afa_stylize,
    aggregate,
    attend,
    attention,
    attention_weights,
    concat_tokens,
    load_branch,
)
