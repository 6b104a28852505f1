"""Independent oracles used across the test suite.

Everything here is deliberately written from scratch against the
documented behaviour (naive recursion, name-based rule checks, O(n^2)
scans) so it shares no code path with the implementation it checks.
"""

import numpy as np

from symclf.expr import Library

REFERENCE_FEATURES = [
    "externalDest", "type_cash-out", "amount", "maxDest7", "type_transfer",
]

# preorder of the reference 10-token expression
# sqrt(externalDest + type_cash-out) * (amount - maxDest7 + type_transfer)
REFERENCE_PREFIX = [
    "*", "sqrt", "+", "externalDest", "type_cash-out",
    "+", "-", "amount", "maxDest7", "type_transfer",
]


def reference_library(extra_features=()):
    return Library.build(REFERENCE_FEATURES + list(extra_features))


def naive_eval_row(tree, row):
    """Single-row recursive evaluator (the batch evaluator's oracle)."""
    lib = tree.library
    row = np.asarray(row, dtype=np.float64)
    children = {i: [] for i in range(len(tree))}
    for i, p in enumerate(tree.parents):
        if p >= 0:
            children[p].append(i)
    const_slots = {}
    k = 0
    for i, tid in enumerate(tree.token_ids):
        if lib.tokens[tid].kind == "const":
            const_slots[i] = k
            k += 1

    ufuncs = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide,
              "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
              "square": np.square, "sqrt": np.sqrt}

    def rec(i):
        tok = lib.tokens[tree.token_ids[i]]
        if tok.kind == "feature":
            return row[tok.feature_index]
        if tok.kind == "const":
            return np.float64(tree.constants[const_slots[i]])
        args = [rec(c) for c in children[i]]
        return ufuncs[tok.name](*args)

    with np.errstate(all="ignore"):
        return float(rec(0))


_INVERSE = {"log": "exp", "exp": "log", "sqrt": "square", "square": "sqrt"}
_TRIG = {"sin", "cos"}


def validate_sequence(seq, lib, min_len, max_len, trig_descendant=True):
    """Independent grammar check of a complete preorder token sequence.

    Returns a list of violation strings (empty = valid).
    """
    names = [lib.tokens[t].name for t in seq]
    arities = [lib.tokens[t].arity for t in seq]
    kinds = [lib.tokens[t].kind for t in seq]
    violations = []

    def build(pos):
        if pos >= len(seq):
            return None, pos
        node = {"i": pos, "children": []}
        nxt = pos + 1
        for _ in range(arities[pos]):
            child, nxt = build(nxt)
            if child is None:
                return None, nxt
            node["children"].append(child)
        return node, nxt

    root, consumed = build(0)
    if root is None or consumed != len(seq):
        return ["not a single well-formed tree"]

    if not min_len <= len(seq) <= max_len:
        violations.append(f"length {len(seq)} outside [{min_len}, {max_len}]")
    if len(seq) == 1 and kinds[0] == "const":
        violations.append("lone constant tree")

    def walk(node, trig_above):
        i = node["i"]
        if names[i] in _TRIG and trig_above:
            violations.append(f"trig token inside trig subtree at {i}")
        if arities[i] == 1:
            child = node["children"][0]
            if names[child["i"]] == _INVERSE.get(names[i]):
                violations.append(f"inverse child under {names[i]} at {i}")
        if arities[i] == 2:
            first, second = node["children"]
            if kinds[first["i"]] == "const" and kinds[second["i"]] == "const":
                violations.append(f"constant leaf pair under node {i}")
        below = names[i] in _TRIG or (trig_above and trig_descendant)
        for child in node["children"]:
            walk(child, below)

    walk(root, False)
    return violations


def random_tree_tokens(lib, rng, max_depth=4, p_leaf=0.4):
    """Random syntactically valid preorder sequence (ignores grammar rules
    beyond arity; used for round-trip and evaluation oracles)."""
    arity0 = [i for i in range(len(lib)) if lib.arities[i] == 0]
    ops = [i for i in range(len(lib)) if lib.arities[i] > 0]

    def gen(depth):
        if depth >= max_depth or not ops or rng.random() < p_leaf:
            return [arity0[rng.integers(len(arity0))]]
        tid = ops[rng.integers(len(ops))]
        out = [tid]
        for _ in range(int(lib.arities[tid])):
            out.extend(gen(depth + 1))
        return out

    return gen(0)


def brute_force_confusion(pred, truth):
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def brute_force_front(points):
    """O(n^2) pairwise-domination Pareto oracle over (complexity, f1, expr).

    Applies the same presentation rule as the contract: one point per
    complexity (best f1, ties to the lexicographically smallest
    expression), sorted by complexity.
    """
    nondom = []
    for c, f1, e in points:
        dominated = any(
            (c2 <= c and f2 >= f1) and (c2 < c or f2 > f1)
            for c2, f2, _ in points
        )
        if not dominated:
            nondom.append((c, f1, e))
    best = {}
    for c, f1, e in nondom:
        if c not in best or f1 > best[c][0] or (f1 == best[c][0] and e < best[c][1]):
            best[c] = (f1, e)
    return [(c, best[c][0], best[c][1]) for c in sorted(best)]
