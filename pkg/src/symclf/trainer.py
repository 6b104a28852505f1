"""Outer training loop and the risk-seeking gradient estimator.

Per iteration: the policy samples a batch of expressions, the best of the
batch get their constants fitted, a GP loop refines the population, every
evaluated candidate lands in the Pareto archive with its validation F1,
and the policy parameters move along the risk-seeking gradient

    (1/(eps*N)) * sum_i [R_i - Rq] * 1{R_i >= Rq} * grad log p(seq_i)

where Rq is the empirical (1-eps)-quantile of the batch rewards.  Samples
below the quantile contribute exactly zero.

By default the gradient is computed from the sequences the policy itself
emitted (with constants fitted), not from their GP descendants: the
log-probability term belongs to the emitted sequence, and crediting GP
edits to it would bias the estimator.  Set credit="evolved" to train on
the final GP population instead (every GP individual satisfies the
grammar, so its log-probability is well defined).
"""

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .classify import REWARDS, reward_f1
from .constopt import fit_constants
from .data import Dataset, TRAIN, VALIDATION
from .errors import ConfigInvalid, DataInvalid, EmptyBatch
from .expr import DEFAULT_OPERATORS, Library, parse_prefix, serialize
from .gp import Candidate, GpConfig, evolve
from .grammar import GrammarConfig
from .policy import PolicyNet, grad_log_prob, gradient_step, sample_batch


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 200
    epsilon: float = 0.05
    threshold: float = 0.7
    reward: str = "f1"            # "f1" or "ce"
    min_len: int = 4
    max_len: int = 30
    trig_descendant: bool = True
    hidden_size: int = 32
    learning_rate: float = 5e-4
    clip_norm: float = 5.0
    init_scale: float = 0.1
    gp: GpConfig = field(default_factory=GpConfig)
    const_budget: int = 200
    gp_refit_fraction: float = 0.25
    gp_refit_budget: int = 50
    credit: str = "sampled"       # or "evolved"
    reward_subsample: int = 0     # 0 = score on the full train split
    operators: tuple = DEFAULT_OPERATORS
    include_constant: bool = True
    seed: int = 0

    def validate(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigInvalid("epsilon must lie in (0, 1]")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigInvalid("threshold must lie in (0, 1)")
        if self.batch_size < math.ceil(1.0 / self.epsilon):
            raise ConfigInvalid(
                f"batch_size {self.batch_size} leaves the top-epsilon set empty "
                f"(need >= {math.ceil(1.0 / self.epsilon)})")
        if self.iterations < 0:
            raise ConfigInvalid("iterations must be >= 0")
        if self.reward not in REWARDS:
            raise ConfigInvalid(f"reward must be one of {sorted(REWARDS)}")
        if self.credit not in ("sampled", "evolved"):
            raise ConfigInvalid("credit must be 'sampled' or 'evolved'")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigInvalid("need 1 <= min_len <= max_len")
        self.gp.validate()

    def to_json(self) -> dict:
        d = asdict(self)
        d["gp"] = asdict(self.gp)
        d["operators"] = list(self.operators)
        return d

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        obj = dict(obj)
        gp = GpConfig(**obj.pop("gp", {}))
        obj["operators"] = tuple(obj.get("operators", DEFAULT_OPERATORS))
        cfg = TrainConfig(gp=gp, **obj)
        return cfg


def epsilon_quantile(rewards, eps: float) -> float:
    """Empirical (1-eps)-quantile: ascending rank ceil((1-eps)N), clamped.

    At least ceil(eps*N) batch elements are >= the returned value.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    n = len(rewards)
    if n == 0:
        raise EmptyBatch("quantile of an empty reward vector")
    # the small slack keeps ceil() immune to float noise in (1-eps)*n
    idx = max(0, math.ceil((1.0 - eps) * n - 1e-9) - 1)
    return float(np.sort(rewards, kind="stable")[idx])


def risk_gradient(net: PolicyNet, sequences, rewards, eps: float,
                  grammar: GrammarConfig):
    """Monte Carlo risk-seeking gradient over one batch.

    Returns (gradient dict, baseline).  Samples at or below the baseline
    contribute nothing (their coefficient is zero), so their backward
    passes are skipped.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    baseline = epsilon_quantile(rewards, eps)
    n = len(sequences)
    grads = net.zero_grads()
    scale = 1.0 / (eps * n)
    for seq, r in zip(sequences, rewards):
        coeff = r - baseline
        if r < baseline or coeff == 0.0:
            continue
        g = grad_log_prob(net, seq, grammar)
        w = scale * coeff
        for k in grads:
            grads[k] += w * g[k]
    return grads, baseline


@dataclass
class ArchiveEntry:
    expression: str
    complexity: int
    f1: float  # validation split


@dataclass
class RunLog:
    """Per-iteration training records.

    ``wall_time`` is informational only and excluded from the serialized
    form, which must be byte-identical across reruns of the same config.
    """

    records: list[dict] = field(default_factory=list)

    def append(self, **kv):
        self.records.append(kv)

    def to_lines(self) -> list[str]:
        import json

        lines = []
        for rec in self.records:
            body = {k: v for k, v in rec.items() if k != "wall_time"}
            lines.append(json.dumps(body, sort_keys=True))
        return lines

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")


@dataclass
class TrainResult:
    best: Candidate
    best_val_reward: float
    log: RunLog
    archive: list[ArchiveEntry]
    net: PolicyNet
    library: Library


class _Scorer:
    """Memoized evaluation: train-split reward plus validation records."""

    def __init__(self, cfg, X_tr, y_tr, X_val, y_val):
        self.reward_fn = REWARDS[cfg.reward]
        self.t = cfg.threshold
        self.X_tr, self.y_tr = X_tr, y_tr
        self.X_val, self.y_val = X_val, y_val
        self.cache: dict[str, tuple[float, float, float]] = {}
        self.light_cache: dict[str, float] = {}
        self.archive: dict[str, ArchiveEntry] = {}

    def train_reward(self, tree) -> float:
        """Train-split reward only; used for constant-fit probes, which are
        optimizer internals and stay out of the archive."""
        key = serialize(tree)
        hit = self.cache.get(key)
        if hit is not None:
            return hit[0]
        r = self.light_cache.get(key)
        if r is None:
            r = self.reward_fn(tree, self.X_tr, self.y_tr, self.t)
            self.light_cache[key] = r
        return r

    def __call__(self, cand: Candidate) -> float:
        return self.score_tree(cand.tree, cand.complexity)

    def score_tree(self, tree, comp=None) -> float:
        key = serialize(tree)
        hit = self.cache.get(key)
        if hit is None:
            train_r = self.reward_fn(tree, self.X_tr, self.y_tr, self.t)
            val_r = self.reward_fn(tree, self.X_val, self.y_val, self.t)
            val_f1 = (val_r if self.reward_fn is reward_f1
                      else reward_f1(tree, self.X_val, self.y_val, self.t))
            hit = (train_r, val_r, val_f1)
            self.cache[key] = hit
            if comp is None:
                from .expr import complexity as _c

                comp = _c(tree)
            self.archive[key] = ArchiveEntry(key, comp, val_f1)
        return hit[0]

    def val_reward(self, tree) -> float:
        self.score_tree(tree)
        return self.cache[serialize(tree)][1]


def train(cfg: TrainConfig, dataset: Dataset) -> TrainResult:
    """Run the full search and return the best candidate by validation reward."""
    cfg.validate()
    X_tr_full, y_tr_full = dataset.subset(TRAIN)
    X_val, y_val = dataset.subset(VALIDATION)
    if len(np.unique(y_tr_full)) < 2:
        raise DataInvalid("train split contains a single class")

    rng = np.random.default_rng(cfg.seed)
    lib = Library.build(dataset.feature_names, cfg.operators, cfg.include_constant)
    grammar = GrammarConfig(cfg.min_len, cfg.max_len, cfg.trig_descendant)
    net = PolicyNet(lib, cfg.hidden_size, rng, cfg.init_scale)

    if 0 < cfg.reward_subsample < len(y_tr_full):
        idx = rng.choice(len(y_tr_full), size=cfg.reward_subsample, replace=False)
        X_tr, y_tr = X_tr_full[idx], y_tr_full[idx]
        if len(np.unique(y_tr)) < 2:
            raise DataInvalid("reward subsample lost one of the classes; "
                              "increase reward_subsample")
    else:
        X_tr, y_tr = X_tr_full, y_tr_full

    scorer = _Scorer(cfg, X_tr, y_tr, X_val, y_val)
    log = RunLog()
    best: Candidate | None = None
    best_val = -1.0
    best_train_so_far = -1.0

    n_top = max(1, math.ceil(cfg.epsilon * cfg.batch_size))
    searching = cfg.iterations > 0
    for it in range(max(1, cfg.iterations)):
        t0 = time.perf_counter()
        batch = sample_batch(net, cfg.batch_size, rng, grammar)
        cands = [Candidate(parse_prefix(seq, lib)) for seq in batch.sequences]
        rewards = np.array([scorer(c) for c in cands])

        if searching and cfg.const_budget > 0:
            order = sorted(range(len(cands)), key=lambda i: (-rewards[i], i))
            for i in order[:n_top]:
                if cands[i].tree.n_constants == 0:
                    continue
                fitted, _ = fit_constants(
                    cands[i].tree, scorer.train_reward, cfg.const_budget)
                cands[i] = Candidate(fitted, scorer.score_tree(fitted))
                rewards[i] = cands[i].reward

        for c, r in zip(cands, rewards):
            c.reward = float(r)

        evolved = None
        if searching and cfg.gp.generations > 0:
            refit = None
            if cfg.gp_refit_fraction > 0 and cfg.gp_refit_budget > 0:
                def refit(cand):
                    fitted, _ = fit_constants(
                        cand.tree, scorer.train_reward, cfg.gp_refit_budget)
                    return Candidate(fitted, scorer.score_tree(fitted))
            evolved, _ = evolve(cands, scorer, cfg.gp, rng, grammar,
                                refit=refit, refit_fraction=cfg.gp_refit_fraction)

        if cfg.credit == "evolved" and evolved is not None:
            grad_seqs = [list(c.tree.token_ids) for c in evolved]
            grad_rewards = np.array([c.reward for c in evolved])
        else:
            grad_seqs = batch.sequences
            grad_rewards = rewards

        baseline = epsilon_quantile(grad_rewards, cfg.epsilon)
        if searching:
            grads, baseline = risk_gradient(net, grad_seqs, grad_rewards,
                                            cfg.epsilon, grammar)
            gradient_step(net, grads, cfg.learning_rate, cfg.clip_norm)

        pool = cands if evolved is None else cands + evolved
        for c in pool:
            v = scorer.val_reward(c.tree)
            if v > best_val or (v == best_val and best is not None
                                and c.complexity < best.complexity):
                best, best_val = c, v
        batch_best = float(np.max(rewards)) if len(rewards) else 0.0
        best_train_so_far = max(best_train_so_far,
                                max(float(np.max(grad_rewards)), batch_best))
        log.append(
            iteration=it,
            best_reward=batch_best,
            best_reward_so_far=best_train_so_far,
            mean_reward=float(np.mean(rewards)),
            baseline=float(baseline),
            best_expression=best.key if best else "",
            best_complexity=best.complexity if best else 0,
            best_val_reward=float(best_val),
            wall_time=time.perf_counter() - t0,
        )
        if not searching:
            break

    assert best is not None
    return TrainResult(best, float(best_val), log,
                       sorted(scorer.archive.values(),
                              key=lambda e: (e.complexity, -e.f1, e.expression)),
                       net, lib)
