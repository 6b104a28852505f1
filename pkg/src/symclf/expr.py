"""Expression vocabulary, syntax trees, batch evaluation and rendering.

An expression is a binary syntax tree whose internal nodes are unary or
binary operators and whose leaves are feature references or constant
slots.  Trees are stored as their preorder token list plus parent links,
which makes the preorder serialization trivially invertible: with known
arities, one token list encodes exactly one tree.

Evaluation is columnar (one numpy op per node over the whole batch) with
IEEE semantics: domain errors produce NaN/inf instead of raising, and
callers treat any non-finite row as marking the candidate invalid.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FeatureIndexOutOfRange,
    IncompleteSequence,
    OverfullSequence,
    UnknownToken,
)

FEATURE = "feature"
CONST = "const"
UNARY = "unary"
BINARY = "binary"

# Per-token complexity weights. Features and constants weigh 1.
OPERATOR_COMPLEXITY = {
    "+": 1,
    "-": 1,
    "*": 1,
    "/": 2,
    "square": 2,
    "sin": 3,
    "cos": 3,
    "exp": 4,
    "log": 4,
    "sqrt": 4,
}

OPERATOR_ARITY = {
    "+": 2,
    "-": 2,
    "*": 2,
    "/": 2,
    "square": 1,
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
}

# Mutually-inverse unary pairs; a child may not invert its unary parent.
INVERSE_PAIRS = (("log", "exp"), ("sqrt", "square"))
TRIG_OPERATORS = ("sin", "cos")

DEFAULT_OPERATORS = ("+", "-", "*", "/", "sin", "cos", "exp", "log", "square", "sqrt")

_UFUNCS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.true_divide,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "square": np.square,
    "sqrt": np.sqrt,
}

CONST_NAME = "C"


@dataclass(frozen=True)
class Token:
    """One vocabulary symbol: feature, constant slot, or operator."""

    name: str
    kind: str
    arity: int
    complexity: int
    feature_index: int = -1


class Library:
    """Ordered token vocabulary with the metadata the grammar rules need.

    Token ids are positions in ``self.tokens``.  Immutable after
    construction; safe to share across workers.
    """

    def __init__(self, tokens: list[Token]):
        names = [t.name for t in tokens]
        if len(set(names)) != len(names):
            raise UnknownToken("duplicate token names in library")
        self.tokens = tuple(tokens)
        self.name_to_id = {t.name: i for i, t in enumerate(tokens)}
        self.arities = np.array([t.arity for t in tokens], dtype=np.int64)
        self.complexities = np.array([t.complexity for t in tokens], dtype=np.int64)
        self.is_trig = np.array([t.name in TRIG_OPERATORS for t in tokens], dtype=bool)
        self.feature_ids = tuple(i for i, t in enumerate(tokens) if t.kind == FEATURE)
        const_ids = [i for i, t in enumerate(tokens) if t.kind == CONST]
        self.const_id = const_ids[0] if const_ids else -1
        # inverse_of[i] = partner id, or -1
        inv = np.full(len(tokens), -1, dtype=np.int64)
        for a, b in INVERSE_PAIRS:
            if a in self.name_to_id and b in self.name_to_id:
                inv[self.name_to_id[a]] = self.name_to_id[b]
                inv[self.name_to_id[b]] = self.name_to_id[a]
        self.inverse_of = inv

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, name: str) -> int:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise UnknownToken(f"token {name!r} not in library") from None

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    @staticmethod
    def build(
        feature_names: list[str],
        operators: tuple[str, ...] = DEFAULT_OPERATORS,
        include_constant: bool = True,
        complexity_overrides: dict[str, int] | None = None,
    ) -> "Library":
        """Assemble a library: operators, then the constant, then features.

        Operators must come from the known set unless a complexity override
        is supplied for them (unknown weights are an error, not a guess).
        """
        overrides = complexity_overrides or {}
        tokens = []
        for name in operators:
            if name in OPERATOR_ARITY:
                comp = overrides.get(name, OPERATOR_COMPLEXITY[name])
                arity = OPERATOR_ARITY[name]
            else:
                raise UnknownToken(f"operator {name!r} has no defined arity/complexity")
            kind = UNARY if arity == 1 else BINARY
            tokens.append(Token(name, kind, arity, comp))
        if include_constant:
            tokens.append(Token(CONST_NAME, CONST, 0, overrides.get(CONST_NAME, 1)))
        for idx, fname in enumerate(feature_names):
            tokens.append(Token(fname, FEATURE, 0, overrides.get(fname, 1), idx))
        return Library(tokens)


def token_complexity(token: Token) -> int:
    """Complexity weight of a single token (positive integer)."""
    return token.complexity


@dataclass(frozen=True)
class ExprTree:
    """Immutable syntax tree in preorder form.

    ``token_ids[i]`` is the library id of node i; ``parents[i]`` is the
    node's parent index (-1 for the root); ``constants`` holds one value
    per constant occurrence, in preorder (slot) order.
    """

    library: Library
    token_ids: tuple[int, ...]
    parents: tuple[int, ...]
    constants: tuple[float, ...] = field(default=())

    def __post_init__(self):
        n_slots = sum(
            1 for t in self.token_ids if self.library.tokens[t].kind == CONST
        )
        if len(self.constants) != n_slots:
            object.__setattr__(
                self, "constants", tuple([1.0] * n_slots)
            )  # unfitted slots default to a neutral 1.0

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def n_constants(self) -> int:
        return len(self.constants)

    def with_constants(self, values) -> "ExprTree":
        vals = tuple(float(v) for v in values)
        if len(vals) != self.n_constants:
            raise ValueError("constant vector length mismatch")
        return ExprTree(self.library, self.token_ids, self.parents, vals)

    def children_of(self, i: int) -> list[int]:
        return [j for j, p in enumerate(self.parents) if p == i]

    def subtree_span(self, i: int) -> tuple[int, int]:
        """Half-open preorder index range [i, end) covered by node i's subtree."""
        end = i + 1
        open_slots = self.library.tokens[self.token_ids[i]].arity
        while open_slots > 0:
            open_slots += self.library.tokens[self.token_ids[end]].arity - 1
            end += 1
        return i, end

    def feature_indices(self) -> set[int]:
        return {
            self.library.tokens[t].feature_index
            for t in self.token_ids
            if self.library.tokens[t].kind == FEATURE
        }


def parse_prefix(seq, library: Library) -> ExprTree:
    """Build the unique tree whose preorder traversal equals ``seq``.

    ``seq`` may hold token ids or token names.  Constant slots are
    allocated left to right with the neutral default value.
    """
    if len(seq) == 0:
        raise IncompleteSequence("empty token sequence")
    ids = [t if isinstance(t, (int, np.integer)) else library.id_of(t) for t in seq]
    parents = []
    stack = []  # (node index, children still owed)
    for i, tid in enumerate(ids):
        if i > 0 and not stack:
            raise OverfullSequence(f"token {i} appears after the tree closed")
        parents.append(stack[-1][0] if stack else -1)
        if stack:
            node, owed = stack[-1]
            if owed == 1:
                stack.pop()
            else:
                stack[-1] = (node, owed - 1)
        arity = int(library.arities[tid])
        if arity > 0:
            stack.append((i, arity))
    if stack:
        raise IncompleteSequence(f"{len(stack)} operator(s) left with open child slots")
    return ExprTree(library, tuple(ids), tuple(parents))


def to_prefix(tree: ExprTree) -> list[int]:
    """Preorder token id list; inverse of parse_prefix."""
    return list(tree.token_ids)


def complexity(tree: ExprTree) -> int:
    """Sum of per-token complexity weights over all nodes."""
    return int(sum(tree.library.complexities[t] for t in tree.token_ids))


def evaluate_batch(tree: ExprTree, X: np.ndarray) -> np.ndarray:
    """Evaluate the tree on every row of X (shape (n, n_features)).

    Domain errors follow IEEE semantics (log 0 -> -inf, 0/0 -> NaN, ...);
    rows with non-finite results are the caller's signal that the
    candidate is invalid.  Raises FeatureIndexOutOfRange if the tree
    references a column X does not have.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    n = X.shape[0]
    lib = tree.library
    for tid in tree.token_ids:
        tok = lib.tokens[tid]
        if tok.kind == FEATURE and tok.feature_index >= X.shape[1]:
            raise FeatureIndexOutOfRange(
                f"feature {tok.name!r} (column {tok.feature_index}) "
                f"but X has {X.shape[1]} columns"
            )

    values: list[np.ndarray | None] = [None] * len(tree)
    child_lists: list[list[int]] = [[] for _ in range(len(tree))]
    for i, p in enumerate(tree.parents):
        if p >= 0:
            child_lists[p].append(i)
    slot = tree.n_constants
    with np.errstate(all="ignore"):
        # children sit at higher preorder indices, so a reverse sweep is
        # a valid post-order evaluation
        for i in range(len(tree) - 1, -1, -1):
            tok = lib.tokens[tree.token_ids[i]]
            if tok.kind == FEATURE:
                values[i] = X[:, tok.feature_index]
            elif tok.kind == CONST:
                slot -= 1
                values[i] = np.full(n, tree.constants[slot])
            elif tok.arity == 1:
                values[i] = _UFUNCS[tok.name](values[child_lists[i][0]])
            else:
                left, right = child_lists[i]
                values[i] = _UFUNCS[tok.name](values[left], values[right])
    out = values[0]
    assert out is not None
    return np.asarray(out, dtype=np.float64)


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def render_infix(tree: ExprTree, precision: int = 4) -> str:
    """Human-readable infix string with minimal parentheses.

    Constants print with ``precision`` significant digits; output is
    deterministic for a given tree.
    """
    lib = tree.library
    child_lists: list[list[int]] = [[] for _ in range(len(tree))]
    for i, p in enumerate(tree.parents):
        if p >= 0:
            child_lists[p].append(i)
    slots = {}
    k = 0
    for i, tid in enumerate(tree.token_ids):
        if lib.tokens[tid].kind == CONST:
            slots[i] = k
            k += 1

    def prec(i: int) -> int:
        return _PRECEDENCE.get(lib.tokens[tree.token_ids[i]].name, 3)

    def walk(i: int) -> str:
        tok = lib.tokens[tree.token_ids[i]]
        if tok.kind == FEATURE:
            return tok.name
        if tok.kind == CONST:
            return f"{tree.constants[slots[i]]:.{precision}g}"
        if tok.arity == 1:
            return f"{tok.name}({walk(child_lists[i][0])})"
        left, right = child_lists[i]
        lstr, rstr = walk(left), walk(right)
        p = _PRECEDENCE[tok.name]
        if prec(left) < p:
            lstr = f"({lstr})"
        # right side needs parens at equal precedence for - and /
        if prec(right) < p or (prec(right) == p and tok.name in ("-", "/")):
            rstr = f"({rstr})"
        return f"{lstr} {tok.name} {rstr}"

    return walk(0)


def serialize(tree: ExprTree) -> str:
    """One-line prefix form: tokens space-separated, constants as C=<decimal>."""
    parts = []
    slot = 0
    for tid in tree.token_ids:
        tok = tree.library.tokens[tid]
        if tok.kind == CONST:
            parts.append(f"C={tree.constants[slot]!r}")
            slot += 1
        else:
            parts.append(tok.name)
    return " ".join(parts)


def deserialize(line: str, library: Library) -> ExprTree:
    """Parse the one-line prefix form back into a tree."""
    names = []
    values = []
    for part in line.split():
        if part.startswith("C=") or part == CONST_NAME:
            names.append(CONST_NAME)
            values.append(float(part[2:]) if part.startswith("C=") else 1.0)
        else:
            names.append(part)
    tree = parse_prefix(names, library)
    return tree.with_constants(values)
