"""Genetic-programming inner loop over expression trees.

Populations seeded by the sampling policy are refined for a fixed number
of generations with tournament selection, subtree crossover and per-node
mutation.  Offspring must pass the same grammar rules the sampler
enforces; violating offspring are rejected and resampled a few times,
after which the parents pass through unchanged.  The best individual is
copied into the next generation untouched, so the best fitness never
decreases.
"""

from dataclasses import dataclass, field

import numpy as np

from .expr import CONST, ExprTree, Library, complexity, parse_prefix, serialize
from .grammar import GrammarConfig, check_sequence

CROSSOVER_ATTEMPTS = 10
MUTATION_ATTEMPTS = 10


@dataclass
class Candidate:
    """An expression plus everything the search layers attach to it."""

    tree: ExprTree
    reward: float | None = None
    complexity: int = field(default=-1)

    def __post_init__(self):
        if self.complexity < 0:
            self.complexity = complexity(self.tree)

    @property
    def key(self) -> str:
        return serialize(self.tree)


@dataclass
class GpConfig:
    generations: int = 20
    population_size: int = 500
    crossover_prob: float = 0.5
    mutation_prob: float = 0.05  # per node
    tournament_size: int = 5

    def validate(self):
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        for name in ("crossover_prob", "mutation_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


def _node_const_values(tree: ExprTree) -> list:
    """Per-node constant value (None for non-constant nodes)."""
    vals = []
    slot = 0
    for tid in tree.token_ids:
        if tree.library.tokens[tid].kind == CONST:
            vals.append(tree.constants[slot])
            slot += 1
        else:
            vals.append(None)
    return vals


def _build(lib: Library, tokens: list[int], values: list) -> ExprTree:
    tree = parse_prefix(tokens, lib)
    return tree.with_constants([v for v in values if v is not None])


def crossover(a: ExprTree, b: ExprTree, rng, grammar: GrammarConfig):
    """Swap uniformly chosen subtrees of a and b.

    Offspring that break the grammar or the length caps are rejected; after
    CROSSOVER_ATTEMPTS failures the parents are returned unchanged.
    """
    lib = a.library
    ta, va = list(a.token_ids), _node_const_values(a)
    tb, vb = list(b.token_ids), _node_const_values(b)
    for _ in range(CROSSOVER_ATTEMPTS):
        i = int(rng.integers(len(ta)))
        j = int(rng.integers(len(tb)))
        ia, ia_end = a.subtree_span(i)
        jb, jb_end = b.subtree_span(j)
        t1 = ta[:ia] + tb[jb:jb_end] + ta[ia_end:]
        v1 = va[:ia] + vb[jb:jb_end] + va[ia_end:]
        t2 = tb[:jb] + ta[ia:ia_end] + tb[jb_end:]
        v2 = vb[:jb] + va[ia:ia_end] + vb[jb_end:]
        if check_sequence(t1, lib, grammar) and check_sequence(t2, lib, grammar):
            return _build(lib, t1, v1), _build(lib, t2, v2)
    return a, b


def mutate(tree: ExprTree, rng, p: float, grammar: GrammarConfig) -> ExprTree:
    """Replace each node, independently with probability p, by another
    token of the same arity; grammar violations trigger a full resample."""
    lib = tree.library
    pools: dict[int, list[int]] = {0: [], 1: [], 2: []}
    for tid in range(len(lib)):
        pools[int(lib.arities[tid])].append(tid)
    tokens_orig = list(tree.token_ids)
    values_orig = _node_const_values(tree)
    for _ in range(MUTATION_ATTEMPTS):
        tokens = list(tokens_orig)
        values = list(values_orig)
        for i, tid in enumerate(tokens_orig):
            if rng.random() >= p:
                continue
            options = [o for o in pools[int(lib.arities[tid])] if o != tid]
            if not options:
                continue
            new_tid = options[int(rng.integers(len(options)))]
            tokens[i] = new_tid
            if lib.tokens[new_tid].kind == CONST:
                values[i] = values_orig[i] if values_orig[i] is not None else 1.0
            else:
                values[i] = None
        if tokens == tokens_orig:
            return tree
        if check_sequence(tokens, lib, grammar):
            return _build(lib, tokens, values)
    return tree


def tournament_select(pop: list[Candidate], fitnesses, k: int, rng) -> Candidate:
    """Best of a uniformly drawn size-k subset.

    Ties break toward lower complexity, then toward the earlier index.
    """
    n = len(pop)
    if not 1 <= k <= n:
        raise ValueError(f"tournament size {k} not in [1, {n}]")
    idx = rng.choice(n, size=k, replace=False)
    best = min(idx, key=lambda i: (-fitnesses[i], pop[i].complexity, i))
    return pop[int(best)]


def _elite_index(pop: list[Candidate]) -> int:
    return min(range(len(pop)),
               key=lambda i: (-pop[i].reward, pop[i].complexity, i))


def evolve(seed: list[Candidate], fitness, cfg: GpConfig, rng,
           grammar: GrammarConfig, refit=None, refit_fraction: float = 0.0):
    """Run cfg.generations of selection / crossover / mutation.

    ``fitness`` maps a Candidate to a real (total: invalid candidates
    score 0).  ``refit``, when given, is applied to the top
    ``refit_fraction`` of each new generation (candidates returned by it
    replace the originals; its reward must not decrease).  Returns
    (final population, best fitness per generation including the seed).
    """
    cfg.validate()
    if not seed:
        raise ValueError("seed population is empty")
    pop = [Candidate(c.tree, c.reward, c.complexity) for c in seed]
    for c in pop:
        if c.reward is None:
            c.reward = fitness(c)
    if cfg.generations == 0:
        return pop, [pop[_elite_index(pop)].reward]
    size = cfg.population_size
    if len(pop) > size:
        keep = sorted(range(len(pop)),
                      key=lambda i: (-pop[i].reward, pop[i].complexity, i))[:size]
        pop = [pop[i] for i in sorted(keep)]
    elif len(pop) < size:
        pad = rng.integers(len(pop), size=size - len(pop))
        pop = pop + [Candidate(pop[i].tree, pop[i].reward, pop[i].complexity)
                     for i in pad]
    history = [pop[_elite_index(pop)].reward]
    fits = [c.reward for c in pop]
    for _ in range(cfg.generations):
        new = [pop[_elite_index(pop)]]
        while len(new) < size:
            if size >= 2 and rng.random() < cfg.crossover_prob:
                p1 = tournament_select(pop, fits, cfg.tournament_size, rng)
                p2 = tournament_select(pop, fits, cfg.tournament_size, rng)
                t1, t2 = crossover(p1.tree, p2.tree, rng, grammar)
                offspring = [t1, t2]
            else:
                p1 = tournament_select(pop, fits, cfg.tournament_size, rng)
                offspring = [p1.tree]
            for t in offspring:
                if len(new) >= size:
                    break
                new.append(Candidate(mutate(t, rng, cfg.mutation_prob, grammar)))
        for c in new:
            if c.reward is None:
                c.reward = fitness(c)
        if refit is not None and refit_fraction > 0.0:
            n_fit = max(1, int(np.ceil(refit_fraction * size)))
            order = sorted(range(size), key=lambda i: (-new[i].reward, new[i].complexity, i))
            for i in order[:n_fit]:
                if new[i].tree.n_constants > 0:
                    new[i] = refit(new[i])
        pop = new
        fits = [c.reward for c in pop]
        history.append(pop[_elite_index(pop)].reward)
    return pop, history
