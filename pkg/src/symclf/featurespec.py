"""Per-feature metadata consumed by rule extraction.

Carries which features are Boolean {0,1} indicators, which belong to a
one-hot group (mutually exclusive), and affine sign facts known to hold
for every data row (each fact states sum(coeffs * x) <= bound).  Facts
let the extractor prove that whole branches of a thresholded expression
can never fire.
"""

import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SignFact:
    """Affine invariant: sum over coeffs of coeff * feature <= bound."""

    coeffs: dict[str, float]
    bound: float

    def scaled(self, means: dict[str, float], stds: dict[str, float]) -> "SignFact":
        """Rewrite the fact for standard-scaled columns x' = (x - mean)/std."""
        new_coeffs = {}
        shift = 0.0
        for name, a in self.coeffs.items():
            s = stds.get(name, 1.0)
            m = means.get(name, 0.0)
            new_coeffs[name] = a * s
            shift += a * m
        return SignFact(new_coeffs, self.bound - shift)


@dataclass
class FeatureSpec:
    feature_names: list[str]
    boolean: set[str] = field(default_factory=set)
    one_hot_groups: dict[str, list[str]] = field(default_factory=dict)
    sign_facts: list[SignFact] = field(default_factory=list)

    def validate(self):
        known = set(self.feature_names)
        for name in self.boolean:
            if name not in known:
                raise ValueError(f"boolean feature {name!r} not in feature list")
        seen = set()
        for group, members in self.one_hot_groups.items():
            for m in members:
                if m in seen:
                    raise ValueError(f"feature {m!r} in more than one one-hot group")
                if m not in self.boolean:
                    raise ValueError(f"one-hot member {m!r} (group {group}) must be boolean")
                seen.add(m)

    def group_of(self, name: str) -> str | None:
        for group, members in self.one_hot_groups.items():
            if name in members:
                return group
        return None

    def to_json(self) -> dict:
        return {
            "features": [
                {
                    "name": n,
                    "boolean": n in self.boolean,
                    "one_hot_group": self.group_of(n),
                }
                for n in self.feature_names
            ],
            "sign_facts": [
                {"coeffs": f.coeffs, "bound": f.bound} for f in self.sign_facts
            ],
        }

    @staticmethod
    def from_json(obj: dict) -> "FeatureSpec":
        names = [f["name"] for f in obj["features"]]
        boolean = {f["name"] for f in obj["features"] if f.get("boolean")}
        groups: dict[str, list[str]] = {}
        for f in obj["features"]:
            g = f.get("one_hot_group")
            if g:
                groups.setdefault(g, []).append(f["name"])
        facts = [
            SignFact({k: float(v) for k, v in f["coeffs"].items()}, float(f["bound"]))
            for f in obj.get("sign_facts", [])
        ]
        spec = FeatureSpec(names, boolean, groups, facts)
        spec.validate()
        return spec

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "FeatureSpec":
        with open(path) as fh:
            return FeatureSpec.from_json(json.load(fh))
