"""Syntax-tree constraints applied while a preorder sequence is generated.

Four rules shape the mask over the library at every position:

  (a) length bounds: operators are forbidden once the tree could no
      longer close within max_len, and leaves are forbidden while the
      tree would close below min_len;
  (b) a pair of sibling leaves may not both be constants (and a lone
      constant root is forbidden), which rules out constant-only trees;
  (c) the child of a unary operator may not be its inverse
      (log/exp, sqrt/square);
  (d) trigonometric tokens may not appear inside the subtree of a
      trigonometric ancestor (descendant scope by default; set
      trig_descendant=False for direct children only).

PartialTree replays the exact per-step state both for sampling and for
re-scoring an existing sequence, so recorded log-probabilities and
validity checks share one source of truth.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DeadEnd, ZeroProbability
from .expr import Library

EMPTY = -1  # observation id for "no parent" / "no elder sibling"


@dataclass
class GrammarConfig:
    min_len: int = 4
    max_len: int = 30
    trig_descendant: bool = True  # False restricts rule (d) to direct children


class PartialTree:
    """Incremental preorder construction state for one expression."""

    __slots__ = ("lib", "cfg", "tokens", "stack", "trig_banned")

    def __init__(self, lib: Library, cfg: GrammarConfig):
        self.lib = lib
        self.cfg = cfg
        self.tokens: list[int] = []
        # stack entries: (parent node index, elder sibling node index, trig ban)
        self.stack: list[tuple[int, int, bool]] = [(EMPTY, EMPTY, False)]
        self.trig_banned: list[bool] = []

    @property
    def done(self) -> bool:
        return not self.stack

    def observation(self) -> tuple[int, int]:
        """(parent token id, elder sibling token id) of the next slot."""
        parent, sibling, _ = self.stack[-1]
        p = self.tokens[parent] if parent != EMPTY else EMPTY
        s = self.tokens[sibling] if sibling != EMPTY else EMPTY
        return p, s

    def constraint_mask(self) -> np.ndarray:
        """Boolean vector over the library: True = admissible next token."""
        lib, cfg = self.lib, self.cfg
        n_open = len(self.stack)
        length = len(self.tokens)
        parent, sibling, trig_ban = self.stack[-1]

        # (a) the minimal completion after placing arity-a is length+n_open+a
        mask = lib.arities <= (cfg.max_len - length - n_open)
        if n_open == 1 and length + 1 < cfg.min_len:
            mask = mask & (lib.arities > 0)

        if lib.const_id >= 0:
            if parent == EMPTY:
                mask[lib.const_id] = False  # lone constant tree
            elif sibling != EMPTY and self.tokens[sibling] == lib.const_id:
                mask[lib.const_id] = False  # (b) sibling leaf already constant
        if parent != EMPTY:
            inv = lib.inverse_of[self.tokens[parent]]
            if inv >= 0:
                mask[inv] = False  # (c)
        if trig_ban:
            mask = mask & ~lib.is_trig  # (d)

        if not mask.any():
            raise DeadEnd(
                f"no admissible token at position {length} "
                f"(min_len={cfg.min_len}, max_len={cfg.max_len})"
            )
        return mask

    def push(self, token_id: int) -> None:
        """Commit the next token (assumed admissible) and open its child slots."""
        idx = len(self.tokens)
        parent, _, trig_ban = self.stack.pop()
        self.tokens.append(int(token_id))
        self.trig_banned.append(trig_ban)
        arity = int(self.lib.arities[token_id])
        if arity == 0:
            return
        child_ban = (
            (trig_ban if self.cfg.trig_descendant else False)
            or bool(self.lib.is_trig[token_id])
        )
        if arity == 2:
            # second child's elder sibling is the first child's root, which
            # in preorder is the very next node
            self.stack.append((idx, idx + 1, child_ban))
        self.stack.append((idx, EMPTY, child_ban))


def check_sequence(seq, lib: Library, cfg: GrammarConfig) -> bool:
    """True iff the full preorder sequence is reachable under the mask rules."""
    state = PartialTree(lib, cfg)
    for tid in seq:
        if state.done:
            return False
        try:
            mask = state.constraint_mask()
        except DeadEnd:
            return False
        if not mask[tid]:
            return False
        state.push(tid)
    return state.done


def masked_steps(seq, lib: Library, cfg: GrammarConfig):
    """Yield (observation, mask, token) per position of an existing sequence.

    Raises ZeroProbability if any token was inadmissible at its step; used
    to re-score sequences produced elsewhere (e.g. by the GP loop).
    """
    state = PartialTree(lib, cfg)
    for pos, tid in enumerate(seq):
        if state.done:
            raise ZeroProbability(f"token at position {pos} after the tree closed")
        obs = state.observation()
        mask = state.constraint_mask()
        if not mask[tid]:
            raise ZeroProbability(
                f"token {lib.tokens[tid].name!r} masked at position {pos}"
            )
        yield obs, mask, tid
        state.push(tid)
    if not state.done:
        raise ZeroProbability("sequence ended with open child slots")
