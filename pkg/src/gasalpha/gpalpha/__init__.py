from .evolve import (
    GpConfig,
    Individual,
    MiningResult,
    dedup_pool,
    evolve_generation,
    init_population,
    mine,
    read_pool,
    write_pool,
)
from .expr import Node, eval_expr, format_expr, parse_expr
from .fitness import spearman_ic

__all__ = [
    "GpConfig",
    "Individual",
    "MiningResult",
    "Node",
    "dedup_pool",
    "eval_expr",
    "evolve_generation",
    "format_expr",
    "init_population",
    "mine",
    "parse_expr",
    "read_pool",
    "spearman_ic",
    "write_pool",
]
