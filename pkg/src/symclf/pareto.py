"""Pareto front over (complexity, F1) and elbow-point selection.

A candidate sits on the front when no other candidate is at least as
simple and at least as good, with one of the two strictly better.  The
front is reported sorted by complexity with strictly increasing F1, so
it is directly plottable.  The elbow point is the last front point whose
marginal F1 gain per unit of added complexity still clears a configured
minimum.
"""

from dataclasses import dataclass

from .errors import EmptyArchive, EmptyFront

DEFAULT_MIN_GAIN = 0.005  # F1 per unit complexity


@dataclass(frozen=True)
class ParetoPoint:
    complexity: int
    f1: float
    expression: str  # serialized prefix form


def pareto_front(archive) -> list[ParetoPoint]:
    """Non-dominated candidates, one per complexity value, f1 strictly rising.

    ``archive`` holds anything with complexity / f1 / expression attributes
    (or (complexity, f1, expression) triples).  Duplicates and ordering of
    the archive do not affect the result.
    """
    points = []
    for entry in archive:
        if isinstance(entry, tuple):
            c, f1, expr = entry
        else:
            c, f1, expr = entry.complexity, entry.f1, entry.expression
        points.append((int(c), float(f1), str(expr)))
    if not points:
        raise EmptyArchive("no candidates to rank")

    # per complexity keep the best f1; tie on f1 -> lexicographically
    # smallest expression so the front is permutation-invariant
    best_at = {}
    for c, f1, expr in points:
        cur = best_at.get(c)
        if cur is None or f1 > cur[0] or (f1 == cur[0] and expr < cur[1]):
            best_at[c] = (f1, expr)

    front = []
    best_f1 = -1.0
    for c in sorted(best_at):
        f1, expr = best_at[c]
        if f1 > best_f1:
            front.append(ParetoPoint(c, f1, expr))
            best_f1 = f1
    return front


def elbow(front: list[ParetoPoint], min_gain: float = DEFAULT_MIN_GAIN) -> ParetoPoint:
    """Last front point still earning >= min_gain F1 per unit complexity
    over its predecessor; the first point when none qualifies."""
    if not front:
        raise EmptyFront("elbow of an empty front")
    chosen = front[0]
    for prev, cur in zip(front, front[1:]):
        gain = (cur.f1 - prev.f1) / (cur.complexity - prev.complexity)
        if gain >= min_gain:
            chosen = cur
    return chosen
