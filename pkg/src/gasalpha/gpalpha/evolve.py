"""Genetic programming over alpha expressions, scored by information coefficient.

Every random decision draws from a stream keyed by ``(seed, generation,
slot)``, so results do not depend on how many threads evaluate fitness.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..dataio import LabelSeries
from ..errors import ConfigurationError, DataError, ShapeError, UndefinedCorrelationError
from .expr import PRIMITIVES, Node, eval_expr, format_expr
from .fitness import CorrelationPool, spearman_ic

logger = logging.getLogger(__name__)

# keeps the greedy pool strictly inside the threshold despite one-pass round-off
_DEDUP_MARGIN = 1e-9


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 500
    tournament_size: int = 100
    generations: int = 5
    elite_keep: int = 100
    pool_cap: int = 350
    dedup_corr_threshold: float = 0.7
    max_depth: int = 6
    init_depth: tuple[int, int] = (1, 4)
    ts_windows: tuple[int, ...] = (3, 5, 10, 20, 40, 60)
    function_set: tuple[str, ...] = tuple(PRIMITIVES)
    p_crossover: float = 0.9
    p_subtree_mutation: float = 0.05
    p_point_mutation: float = 0.04
    p_point_replace: float = 0.05
    early_stop_eps: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")
        if self.population_size < 1 or self.pool_cap < 1:
            raise ConfigurationError("population_size and pool_cap must be >= 1")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ConfigurationError("tournament_size must lie in [1, population_size]")
        if not 0 <= self.elite_keep <= self.population_size:
            raise ConfigurationError("elite_keep must lie in [0, population_size]")
        if self.p_crossover + self.p_subtree_mutation + self.p_point_mutation > 1 + 1e-12:
            raise ConfigurationError("operator probabilities exceed 1")
        lo, hi = self.init_depth
        if not 1 <= lo <= hi:
            raise ConfigurationError("init_depth must satisfy 1 <= low <= high")
        unknown = set(self.function_set) - set(PRIMITIVES)
        if unknown:
            raise ConfigurationError(f"unknown primitives {sorted(unknown)}")
        if not self.ts_windows or min(self.ts_windows) < 1:
            raise ConfigurationError("ts_windows must be positive")

    @property
    def p_reproduction(self) -> float:
        return 1.0 - self.p_crossover - self.p_subtree_mutation - self.p_point_mutation


FULL_PROFILE = dict(population_size=5000, tournament_size=1000, elite_keep=1000, pool_cap=350, generations=5)
DESK_PROFILE = dict(population_size=500, tournament_size=100, elite_keep=100, pool_cap=350, generations=5)


@dataclass
class Individual:
    expr: Node
    values: np.ndarray | None = None
    ic: float = 0.0
    fitness: float = 0.0
    flag: str | None = None
    origin: str = ""

    @property
    def ic_sign(self) -> int:
        return -1 if self.ic < 0 else 1

    @property
    def text(self) -> str:
        return format_expr(self.expr)


def rng_for(seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, slot])


# tree construction ---------------------------------------------------------------


def _random_function(rng: np.random.Generator, config: GpConfig, arity: int | None = None) -> str:
    names = config.function_set
    if arity is not None:
        names = tuple(n for n in names if PRIMITIVES[n].arity == arity)
    return names[rng.integers(len(names))]


def _make_call(rng, config: GpConfig, name: str, children: tuple[Node, ...]) -> Node:
    prim = PRIMITIVES[name]
    window = int(config.ts_windows[rng.integers(len(config.ts_windows))]) if prim.windowed else None
    return Node(name, children, window)


def _random_terminal(rng, terminals: Sequence[str]) -> Node:
    return Node(terminals[rng.integers(len(terminals))])


def full_tree(rng, depth: int, terminals: Sequence[str], config: GpConfig) -> Node:
    """Functions at every level above ``depth``; every leaf sits at exactly ``depth``."""
    if depth == 0:
        return _random_terminal(rng, terminals)
    name = _random_function(rng, config)
    kids = tuple(full_tree(rng, depth - 1, terminals, config) for _ in range(PRIMITIVES[name].arity))
    return _make_call(rng, config, name, kids)


def grow_tree(rng, depth: int, terminals: Sequence[str], config: GpConfig, _level: int = 0) -> Node:
    """Root is a function; below it each node is a terminal with probability
    ``n_terminals / (n_terminals + n_functions)``."""
    if _level == depth:
        return _random_terminal(rng, terminals)
    if _level > 0:
        n_t, n_f = len(terminals), len(config.function_set)
        if rng.random() < n_t / (n_t + n_f):
            return _random_terminal(rng, terminals)
    name = _random_function(rng, config)
    kids = tuple(grow_tree(rng, depth, terminals, config, _level + 1) for _ in range(PRIMITIVES[name].arity))
    return _make_call(rng, config, name, kids)


def init_population(config: GpConfig, terminals: Sequence[str]) -> list[Individual]:
    """Half-and-half seeding: the first half grown, the second half full."""
    if not terminals:
        raise ConfigurationError("no terminals to build expressions from")
    terminals = list(terminals)
    lo, hi = config.init_depth[0], min(config.init_depth[1], config.max_depth)
    lo = min(lo, hi)
    n_grow = config.population_size // 2
    pop = []
    for slot in range(config.population_size):
        rng = rng_for(config.rng_seed, 0, slot)
        depth = int(rng.integers(lo, hi + 1))
        if slot < n_grow:
            pop.append(Individual(grow_tree(rng, depth, terminals, config), origin="grow"))
        else:
            pop.append(Individual(full_tree(rng, depth, terminals, config), origin="full"))
    return pop


# tree surgery -----------------------------------------------------------------------


def subtree_paths(node: Node, prefix: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    out = [prefix]
    for i, c in enumerate(node.children):
        out.extend(subtree_paths(c, prefix + (i,)))
    return out


def get_subtree(node: Node, path: tuple[int, ...]) -> Node:
    for i in path:
        node = node.children[i]
    return node


def replace_subtree(node: Node, path: tuple[int, ...], new: Node) -> Node:
    if not path:
        return new
    i = path[0]
    kids = list(node.children)
    kids[i] = replace_subtree(kids[i], path[1:], new)
    return Node(node.value, tuple(kids), node.window)


def clamp_depth(node: Node, max_depth: int, _level: int = 0) -> Node:
    """Collapse any function sitting at ``max_depth`` onto its first leaf."""
    if node.is_terminal:
        return node
    if _level >= max_depth:
        return Node(node.leaves()[0])
    return Node(node.value, tuple(clamp_depth(c, max_depth, _level + 1) for c in node.children), node.window)


def crossover(parent: Node, donor: Node, rng) -> Node:
    p_paths = subtree_paths(parent)
    d_paths = subtree_paths(donor)
    target = p_paths[rng.integers(len(p_paths))]
    graft = get_subtree(donor, d_paths[rng.integers(len(d_paths))])
    return replace_subtree(parent, target, graft)


def point_mutation(node: Node, rng, terminals: Sequence[str], config: GpConfig) -> Node:
    kids = tuple(point_mutation(c, rng, terminals, config) for c in node.children)
    if rng.random() >= config.p_point_replace:
        return Node(node.value, kids, node.window)
    if node.is_terminal:
        return _random_terminal(rng, terminals)
    name = _random_function(rng, config, arity=len(kids))
    return _make_call(rng, config, name, kids)


# evaluation ------------------------------------------------------------------------------


def align_returns(dates: np.ndarray, labels: LabelSeries) -> np.ndarray:
    """Forward log returns placed on ``dates``; NaN where no label exists."""
    out = np.full(len(dates), np.nan)
    pos = np.searchsorted(dates, labels.dates)
    ok = (pos < len(dates)) & (dates[np.minimum(pos, len(dates) - 1)] == labels.dates)
    out[pos[ok]] = labels.log_return[ok]
    return out


def evaluate(ind: Individual, columns: Mapping[str, np.ndarray], forward_returns: np.ndarray) -> Individual:
    ind.values = eval_expr(ind.expr, columns)
    try:
        ind.ic = spearman_ic(ind.values, forward_returns)
        ind.fitness = abs(ind.ic)
        ind.flag = None
    except UndefinedCorrelationError as exc:
        ind.ic, ind.fitness, ind.flag = 0.0, 0.0, str(exc)
    except DataError as exc:
        ind.ic, ind.fitness, ind.flag = 0.0, 0.0, f"evaluation failed: {exc}"
        ind.values = np.full(len(forward_returns), np.nan)
    return ind


def evaluate_all(pop: list[Individual], columns, forward_returns, threads: int = 1) -> list[Individual]:
    todo = [ind for ind in pop if ind.values is None]
    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda i: evaluate(i, columns, forward_returns), todo))
    else:
        for ind in todo:
            evaluate(ind, columns, forward_returns)
    return pop


def _ranked(pop: list[Individual]) -> list[int]:
    fit = np.array([ind.fitness for ind in pop])
    return list(np.argsort(-fit, kind="stable"))


def tournament(fitness: np.ndarray, size: int, rng, uniform: bool = False) -> int:
    """Index of the fittest of ``size`` distinct random entrants; ties go to the lower index."""
    if uniform:
        return int(rng.integers(len(fitness)))
    entrants = np.sort(rng.choice(len(fitness), size=min(size, len(fitness)), replace=False))
    return int(entrants[np.argmax(fitness[entrants])])


def evolve_generation(
    pop: list[Individual],
    config: GpConfig,
    columns: Mapping[str, np.ndarray],
    forward_returns: np.ndarray,
    *,
    generation: int = 1,
    threads: int = 1,
) -> list[Individual]:
    """Breed the next ``population_size`` individuals from an evaluated population."""
    if any(ind.values is None for ind in pop):
        raise ConfigurationError("population must be evaluated before evolving")
    columns = columns.columns if hasattr(columns, "columns") else columns
    terminals = list(columns)
    fitness = np.array([ind.fitness for ind in pop])
    uniform = bool(np.ptp(fitness) == 0)
    if uniform:
        logger.warning("generation %d: all fitness values equal, selecting parents uniformly", generation)

    order = _ranked(pop)
    n_elite = min(config.elite_keep, len(pop), config.population_size)
    nxt = [pop[i] for i in order[:n_elite]]
    lo, hi = config.init_depth[0], min(config.init_depth[1], config.max_depth)
    lo = min(lo, hi)

    offspring = []
    for slot in range(n_elite, config.population_size):
        rng = rng_for(config.rng_seed, generation, slot)
        parent = pop[tournament(fitness, config.tournament_size, rng, uniform)].expr
        r = rng.random()
        if r < config.p_crossover:
            donor = pop[tournament(fitness, config.tournament_size, rng, uniform)].expr
            child, origin = crossover(parent, donor, rng), "crossover"
        elif r < config.p_crossover + config.p_subtree_mutation:
            donor = grow_tree(rng, int(rng.integers(lo, hi + 1)), terminals, config)
            child, origin = crossover(parent, donor, rng), "subtree_mutation"
        elif r < config.p_crossover + config.p_subtree_mutation + config.p_point_mutation:
            child, origin = point_mutation(parent, rng, terminals, config), "point_mutation"
        else:
            child, origin = parent, "reproduction"
        offspring.append(Individual(clamp_depth(child, config.max_depth), origin=origin))
    evaluate_all(offspring, columns, forward_returns, threads)
    return nxt + offspring


def dedup_pool(pop: list[Individual], config: GpConfig) -> list[Individual]:
    """Greedy by descending |IC|: keep an individual only if its |Pearson| with
    every kept column stays within ``dedup_corr_threshold``; stop at ``pool_cap``."""
    kept: list[Individual] = []
    if not pop:
        return kept
    n = len(pop[0].values)
    corr = CorrelationPool(n, min(config.pool_cap, len(pop)))
    for i in _ranked(pop):
        ind = pop[i]
        if ind.flag is not None or not np.isfinite(ind.fitness):
            continue
        if corr.max_abs_corr(ind.values) > config.dedup_corr_threshold - _DEDUP_MARGIN:
            continue
        kept.append(ind)
        corr.add(ind.values)
        if len(kept) >= config.pool_cap:
            break
    return kept


@dataclass
class MiningResult:
    pool: list[Individual]
    best_history: list[float] = field(default_factory=list)
    generations_run: int = 0

    def columns(self, prefix: str = "alpha_") -> dict[str, np.ndarray]:
        return {f"{prefix}{i:03d}": ind.values for i, ind in enumerate(self.pool)}


def mine(table, labels: LabelSeries | np.ndarray, config: GpConfig, *, threads: int = 1) -> MiningResult:
    """Evolve alpha expressions on a training-window table.

    ``labels`` is either a LabelSeries (forward returns aligned by date) or a
    forward-return array already aligned with the table rows.
    """
    if isinstance(labels, LabelSeries):
        fwd = align_returns(table.dates, labels)
    else:
        fwd = np.asarray(labels, dtype=float)
        if len(fwd) != len(table):
            raise ShapeError("forward returns must align with table rows")
    columns = table.columns
    pop = evaluate_all(init_population(config, table.names), columns, fwd, threads)
    history = [max(ind.fitness for ind in pop)]
    run = 0
    for gen in range(1, config.generations + 1):
        parents = dedup_pool(pop, config)
        if not parents:
            logger.warning("no usable individuals after generation %d", gen - 1)
            break
        pop = evolve_generation(parents, config, table, fwd, generation=gen, threads=threads)
        run = gen
        history.append(max(ind.fitness for ind in pop))
        logger.info("generation %d: best |IC| %.4f", gen, history[-1])
        if history[-1] - history[-2] <= config.early_stop_eps:
            break
    return MiningResult(dedup_pool(pop, config), history, run)


def write_pool(result: MiningResult, pool_path: str | Path, metrics_path: str | Path | None = None) -> None:
    """One expression per line, plus an optional (expression, IC, |IC|, depth) table."""
    Path(pool_path).write_text("".join(f"{ind.text}\n" for ind in result.pool), encoding="utf-8")
    if metrics_path is not None:
        with Path(metrics_path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["expression", "ic", "abs_ic", "depth"])
            for ind in result.pool:
                w.writerow([ind.text, repr(ind.ic), repr(ind.fitness), ind.expr.depth()])


def read_pool(path: str | Path) -> list[Node]:
    from .expr import parse_expr

    return [parse_expr(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
