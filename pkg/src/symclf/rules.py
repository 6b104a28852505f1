"""Turn a thresholded expression into human-readable decision rules.

The sigmoid threshold inverts to a raw-value cut: sigmoid(f) >= t exactly
when f >= ln(t/(1-t)).  Every consistent assignment of the Boolean
features appearing in the expression is then enumerated (one-hot groups
allow at most one member set), the expression is partially evaluated
under the assignment, and each case reduces to either a fixed label or a
single affine inequality over the remaining numeric features.  Declared
sign facts can settle a case outright (e.g. a residual known to be
nonpositive can never clear a positive cut).

The supported simplification fragment is deliberately small: +, -,
constant multiples, square root of a constant, and constant folding of
everything else.  Cases outside it raise NotReducible instead of
guessing.

The deployed classifier uses ">=" at the boundary; the extractor follows
that by default and can be switched to strict ">" for comparison.
"""

import itertools
import math
from dataclasses import dataclass, field

from .errors import NotReducible, OutOfRange
from .expr import BINARY, CONST, FEATURE, ExprTree, UNARY
from .featurespec import FeatureSpec

_MAX_BOOLEAN_VARS = 20

_FOLDABLE_UNARY = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": lambda v: math.log(v) if v > 0 else math.nan,
    "square": lambda v: v * v,
    "sqrt": lambda v: math.sqrt(v) if v >= 0 else math.nan,
}


def invert_threshold(t: float) -> float:
    """Raw-value cut: sigmoid(f) >= t iff f >= ln(t/(1-t))."""
    if not 0.0 < t < 1.0:
        raise OutOfRange(f"threshold {t} not in (0, 1)")
    return math.log(t / (1.0 - t))


class _Affine:
    """sum(coeffs[name] * x[name]) + const, the working form during
    partial evaluation."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0.0):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v != 0.0}
        self.const = const

    @property
    def is_const(self):
        return not self.coeffs

    def __add__(self, other):
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) + v
        return _Affine(coeffs, self.const + other.const)

    def __sub__(self, other):
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) - v
        return _Affine(coeffs, self.const - other.const)

    def scale(self, c):
        return _Affine({k: c * v for k, v in self.coeffs.items()}, c * self.const)


def _partial_eval(tree: ExprTree, assignment: dict[str, int]) -> _Affine:
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

    def walk(i: int) -> _Affine:
        tok = lib.tokens[tree.token_ids[i]]
        if tok.kind == FEATURE:
            if tok.name in assignment:
                return _Affine(const=float(assignment[tok.name]))
            return _Affine({tok.name: 1.0})
        if tok.kind == CONST:
            return _Affine(const=tree.constants[slots[i]])
        if tok.kind == UNARY:
            arg = walk(child_lists[i][0])
            if arg.is_const:
                val = _FOLDABLE_UNARY[tok.name](arg.const)
                if not math.isfinite(val):
                    raise NotReducible(
                        f"{tok.name}({arg.const!r}) is not finite under this case"
                    )
                return _Affine(const=val)
            raise NotReducible(f"{tok.name} of a non-constant subexpression")
        assert tok.kind == BINARY
        left = walk(child_lists[i][0])
        right = walk(child_lists[i][1])
        if tok.name == "+":
            return left + right
        if tok.name == "-":
            return left - right
        if tok.name == "*":
            if left.is_const:
                return right.scale(left.const)
            if right.is_const:
                return left.scale(right.const)
            raise NotReducible("product of two non-constant subexpressions")
        if tok.name == "/":
            if right.is_const and right.const != 0.0:
                return left.scale(1.0 / right.const)
            raise NotReducible("division by a non-constant subexpression")
        raise NotReducible(f"operator {tok.name!r} outside the supported fragment")

    return walk(0)


def _bounds(residual: _Affine, facts) -> tuple[float, float]:
    """(lower, upper) bounds on the residual implied by matching sign facts."""
    lo, hi = -math.inf, math.inf
    keys = set(residual.coeffs)
    for fact in facts:
        if set(fact.coeffs) != keys or not keys:
            continue
        any_key = next(iter(keys))
        if fact.coeffs[any_key] == 0.0:
            continue
        lam = residual.coeffs[any_key] / fact.coeffs[any_key]
        if lam == 0.0:
            continue
        if any(
            abs(residual.coeffs[k] - lam * fact.coeffs[k])
            > 1e-9 * max(1.0, abs(residual.coeffs[k]))
            for k in keys
        ):
            continue
        if lam > 0:
            hi = min(hi, lam * fact.bound + residual.const)
        else:
            lo = max(lo, lam * fact.bound + residual.const)
    return lo, hi


@dataclass(frozen=True)
class RuleCase:
    """One Boolean assignment and its outcome.

    Either ``label`` is set (the case is decided outright) or ``coeffs``
    and ``rhs`` describe the residual test: fraud iff
    sum(coeffs * x) >= rhs (or > rhs in strict mode).
    """

    assignment: tuple[tuple[str, int], ...]
    label: int | None = None
    coeffs: tuple[tuple[str, float], ...] = ()
    rhs: float | None = None
    note: str = ""

    @property
    def is_conditional(self) -> bool:
        return self.label is None


@dataclass
class RuleSet:
    cases: list[RuleCase]
    threshold: float       # probability threshold t
    raw_cut: float         # ln(t/(1-t))
    strict: bool = False
    default_label: int = 0
    feature_names: list[str] = field(default_factory=list)

    def classify_row(self, values: dict[str, float]) -> int:
        for case in self.cases:
            if all(values.get(name, 0.0) == v for name, v in case.assignment):
                if case.label is not None:
                    return case.label
                total = sum(c * values.get(name, 0.0) for name, c in case.coeffs)
                return int(total > case.rhs if self.strict else total >= case.rhs)
        return self.default_label

    def fraud_cases(self) -> list[RuleCase]:
        return [c for c in self.cases if c.label == 1 or c.is_conditional]

    def describe(self, precision: int = 4) -> str:
        op = ">" if self.strict else ">="
        lines = [
            f"decision threshold: sigmoid(f) {op} {self.threshold:g}"
            f"  (raw cut f {op} {self.raw_cut:.{precision}f})",
            "classify a transaction as fraudulent if:",
        ]
        any_fraud = False
        for case in self.cases:
            conds = [f"{name} = {v}" for name, v in case.assignment]
            if case.label == 1:
                any_fraud = True
                lines.append("  - " + (" and ".join(conds) if conds else "always"))
            elif case.is_conditional:
                any_fraud = True
                terms = " + ".join(
                    (f"{c:g}*{name}" if c != 1.0 else name) if c >= 0
                    else (f"- {abs(c):g}*{name}" if c != -1.0 else f"- {name}")
                    for name, c in case.coeffs
                ).replace("+ -", "-")
                cond = f"{terms} {op} {case.rhs:.{precision}f}"
                lines.append("  - " + " and ".join(conds + [cond]))
        if not any_fraud:
            lines.append("  - never (no assignment can reach the cut)")
        lines.append("classify a transaction as legitimate otherwise")
        return "\n".join(lines)

    def records(self) -> list[dict]:
        out = []
        for case in self.cases:
            out.append(
                {
                    "assignment": dict(case.assignment),
                    "label": case.label,
                    "coeffs": dict(case.coeffs) if case.is_conditional else None,
                    "rhs": case.rhs,
                    "note": case.note,
                }
            )
        return out


def _consistent_assignments(bool_vars: list[str], spec: FeatureSpec):
    """All 0/1 assignments where each one-hot group has at most one member set."""
    grouped: dict[str, list[str]] = {}
    free = []
    for name in bool_vars:
        g = spec.group_of(name)
        if g is None:
            free.append(name)
        else:
            grouped.setdefault(g, []).append(name)

    group_choices = []
    for members in grouped.values():
        choices = [{m: 0 for m in members}]
        for m in members:
            choice = {x: 0 for x in members}
            choice[m] = 1
            choices.append(choice)
        group_choices.append(choices)

    for free_vals in itertools.product((0, 1), repeat=len(free)):
        base = dict(zip(free, free_vals))
        for combo in itertools.product(*group_choices) if group_choices else [()]:
            assignment = dict(base)
            for choice in combo:
                assignment.update(choice)
            yield assignment


def extract_rules(tree: ExprTree, t: float, spec: FeatureSpec,
                  strict: bool = False) -> RuleSet:
    """Enumerate Boolean cases of the thresholded expression.

    Residual inequality constants carry their exact closed form in the
    case note (display rounding is only cosmetic).  Raises NotReducible
    when a case does not simplify to a constant or one affine residual.
    """
    cut = invert_threshold(t)
    tree_features = {
        tree.library.tokens[tid].name
        for tid in tree.token_ids
        if tree.library.tokens[tid].kind == FEATURE
    }
    bool_vars = sorted(tree_features & spec.boolean)
    if len(bool_vars) > _MAX_BOOLEAN_VARS:
        raise NotReducible(f"{len(bool_vars)} boolean features; enumeration too large")

    cases = []
    for assignment in _consistent_assignments(bool_vars, spec):
        value = _partial_eval(tree, assignment)
        key = tuple(sorted(assignment.items()))
        if value.is_const:
            fires = value.const > cut if strict else value.const >= cut
            cases.append(RuleCase(key, label=int(fires),
                                  note=f"f = {value.const!r} under this case"))
            continue
        lo, hi = _bounds(value, spec.sign_facts)
        never = hi <= cut if strict else hi < cut
        always = lo > cut if strict else lo >= cut
        if never:
            cases.append(RuleCase(key, label=0,
                                  note=f"f <= {hi!r} < cut by sign facts"))
        elif always:
            cases.append(RuleCase(key, label=1,
                                  note=f"f >= {lo!r} >= cut by sign facts"))
        else:
            rhs = cut - value.const
            note = (f"rhs = ln({t:g}/(1-{t:g})) - ({value.const!r}) = {rhs!r}")
            cases.append(RuleCase(key, coeffs=tuple(sorted(value.coeffs.items())),
                                  rhs=rhs, note=note))
    return RuleSet(cases, threshold=t, raw_cut=cut, strict=strict,
                   feature_names=list(spec.feature_names))
