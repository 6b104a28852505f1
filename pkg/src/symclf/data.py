"""Transaction ingestion, feature engineering, splits and synthetic data.

Input rows follow the mobile-money transaction schema (step, type,
amount, account ids, four balances, two fraud flags).  Engineering adds
external-account indicators with balance imputation, per-account
aggregate features (whole-history mean/max with privacy noise, 3- and
7-transaction recipient windows, transaction counts) and a one-hot of
the transaction type, then drops the id columns and the unreliable
pre-flag.

The whole-history aggregates deliberately include future transactions of
the account (they model overall behaviour) and carry Gaussian noise with
sigma = 0.01 * (q75 - min) of the account's amounts; the 3/7-windows
never look ahead and are noise-free.

A synthetic generator plants a knowable rule (transfer to an external
recipient whose amount tops the recipient's recent window) so the search
can be exercised end to end without the real data set.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, CsvParseError, SchemaMismatch, SingleClass
from .featurespec import FeatureSpec, SignFact

PAYSIM_COLUMNS = (
    "step", "type", "amount", "nameOrig", "oldbalanceOrg", "newbalanceOrig",
    "nameDest", "oldbalanceDest", "newbalanceDest", "isFlaggedFraud", "isFraud",
)

TRANSACTION_TYPES = ("cash-in", "cash-out", "debit", "payment", "transfer")

FEATURE_NAMES = (
    "step", "amount", "oldbalanceOrg", "newbalanceOrig",
    "oldbalanceDest", "newbalanceDest",
    "externalOrig", "externalDest",
    "type_cash-in", "type_cash-out", "type_debit", "type_payment", "type_transfer",
    "meanOrig", "maxOrig", "meanDest", "maxDest",
    "meanDest3", "meanDest7", "maxDest3", "maxDest7",
    "numTransOrig", "numTransDest",
)

BOOLEAN_FEATURES = frozenset(
    ("externalOrig", "externalDest") + tuple(f"type_{t}" for t in TRANSACTION_TYPES)
)

DEFAULT_FRACTIONS = (0.75, 0.10, 0.15)
TRAIN, VALIDATION, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "validation": VALIDATION, "test": TEST}


@dataclass
class RawTransaction:
    step: int
    type: str
    amount: float
    nameOrig: str
    oldbalanceOrg: float
    newbalanceOrig: float
    nameDest: str
    oldbalanceDest: float
    newbalanceDest: float
    isFlaggedFraud: int
    isFraud: int


def _normalize_type(value: str) -> str:
    return value.strip().lower().replace("_", "-")


def load_csv(path) -> list[RawTransaction]:
    """Read schema-validated transactions; header order does not matter.

    Raises SchemaMismatch for missing columns and CsvParseError (with the
    1-based data row number) for rows violating the field invariants.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        missing = [c for c in PAYSIM_COLUMNS if c not in header]
        if missing:
            raise SchemaMismatch(f"missing column(s): {', '.join(missing)}")
        for i, rec in enumerate(reader, start=1):
            try:
                ttype = _normalize_type(rec["type"])
                if ttype not in TRANSACTION_TYPES:
                    raise ValueError(f"unknown transaction type {rec['type']!r}")
                amount = float(rec["amount"])
                if amount < 0:
                    raise ValueError(f"negative amount {amount}")
                balances = {
                    k: float(rec[k])
                    for k in ("oldbalanceOrg", "newbalanceOrig",
                              "oldbalanceDest", "newbalanceDest")
                }
                for k, v in balances.items():
                    if v < 0:
                        raise ValueError(f"negative balance {k}={v}")
                is_fraud = int(rec["isFraud"])
                if is_fraud not in (0, 1):
                    raise ValueError(f"isFraud must be 0/1, got {rec['isFraud']!r}")
                rows.append(RawTransaction(
                    step=int(rec["step"]),
                    type=ttype,
                    amount=amount,
                    nameOrig=rec["nameOrig"],
                    oldbalanceOrg=balances["oldbalanceOrg"],
                    newbalanceOrig=balances["newbalanceOrig"],
                    nameDest=rec["nameDest"],
                    oldbalanceDest=balances["oldbalanceDest"],
                    newbalanceDest=balances["newbalanceDest"],
                    isFlaggedFraud=int(rec["isFlaggedFraud"]),
                    isFraud=is_fraud,
                ))
            except (ValueError, KeyError) as exc:
                raise CsvParseError(i, str(exc)) from exc
    return rows


def write_csv(rows: list[RawTransaction], path) -> None:
    """Write transactions in the ingestion schema (deterministic bytes)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAYSIM_COLUMNS)
        for r in rows:
            writer.writerow([
                r.step, r.type, f"{r.amount:.2f}", r.nameOrig,
                f"{r.oldbalanceOrg:.2f}", f"{r.newbalanceOrig:.2f}", r.nameDest,
                f"{r.oldbalanceDest:.2f}", f"{r.newbalanceDest:.2f}",
                r.isFlaggedFraud, r.isFraud,
            ])


def _excluding_stats(amounts: np.ndarray):
    """Per-occurrence mean and max of the *other* occurrences.

    Single-occurrence accounts get 0 for both (there is nothing to
    aggregate).
    """
    n = len(amounts)
    if n == 1:
        return np.zeros(1), np.zeros(1)
    total = amounts.sum()
    mean_other = (total - amounts) / (n - 1)
    order = np.argsort(amounts, kind="stable")
    top, second = amounts[order[-1]], amounts[order[-2]]
    max_other = np.where(amounts < top, top, second)
    return mean_other, max_other


def engineer_features(rows: list[RawTransaction], rng,
                      noise_scale: float = 0.01):
    """Produce the engineered table: (feature names, X, y).

    ``rows`` must already be time-ordered by step (ties keep file order).
    ``noise_scale`` is the multiplier on (q75 - min) for the aggregate
    noise; pass 0 to disable the noise entirely.
    """
    n = len(rows)
    amount = np.array([r.amount for r in rows])
    old_org = np.array([r.oldbalanceOrg for r in rows])
    new_orig = np.array([r.newbalanceOrig for r in rows])
    old_dest = np.array([r.oldbalanceDest for r in rows])
    new_dest = np.array([r.newbalanceDest for r in rows])

    external_orig = ((old_org == 0) & (new_orig == 0)).astype(np.float64)
    external_dest = ((old_dest == 0) & (new_dest == 0)).astype(np.float64)
    # impute counterparty balances so they stay proportional to the amount
    old_org = np.where(external_orig == 1, new_orig + amount, old_org)
    new_dest = np.where(external_dest == 1, old_dest + amount, new_dest)

    orig_idx: dict[str, list[int]] = {}
    dest_idx: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        orig_idx.setdefault(r.nameOrig, []).append(i)
        dest_idx.setdefault(r.nameDest, []).append(i)

    mean_orig = np.zeros(n)
    max_orig = np.zeros(n)
    sigma_orig = np.zeros(n)
    num_orig = np.zeros(n)
    for positions in orig_idx.values():
        pos = np.array(positions)
        amts = amount[pos]
        m, mx = _excluding_stats(amts)
        mean_orig[pos], max_orig[pos] = m, mx
        sigma_orig[pos] = noise_scale * (np.quantile(amts, 0.75) - amts.min())
        num_orig[pos] = len(pos)

    mean_dest = np.zeros(n)
    max_dest = np.zeros(n)
    sigma_dest = np.zeros(n)
    num_dest = np.zeros(n)
    mean3 = np.zeros(n)
    mean7 = np.zeros(n)
    max3 = np.zeros(n)
    max7 = np.zeros(n)
    for positions in dest_idx.values():
        pos = np.array(positions)
        amts = amount[pos]
        m, mx = _excluding_stats(amts)
        mean_dest[pos], max_dest[pos] = m, mx
        sigma_dest[pos] = noise_scale * (np.quantile(amts, 0.75) - amts.min())
        num_dest[pos] = len(pos)
        for k, i in enumerate(positions):
            w3 = amts[max(0, k - 2):k + 1]
            w7 = amts[max(0, k - 6):k + 1]
            mean3[i], max3[i] = w3.mean(), w3.max()
            mean7[i], max7[i] = w7.mean(), w7.max()

    if noise_scale > 0:
        noise = rng.standard_normal((n, 4))
        mean_orig = mean_orig + noise[:, 0] * sigma_orig
        max_orig = max_orig + noise[:, 1] * sigma_orig
        mean_dest = mean_dest + noise[:, 2] * sigma_dest
        max_dest = max_dest + noise[:, 3] * sigma_dest

    type_cols = {
        f"type_{t}": np.array([1.0 if r.type == t else 0.0 for r in rows])
        for t in TRANSACTION_TYPES
    }
    columns = {
        "step": np.array([float(r.step) for r in rows]),
        "amount": amount,
        "oldbalanceOrg": old_org,
        "newbalanceOrig": new_orig,
        "oldbalanceDest": old_dest,
        "newbalanceDest": new_dest,
        "externalOrig": external_orig,
        "externalDest": external_dest,
        **type_cols,
        "meanOrig": mean_orig,
        "maxOrig": max_orig,
        "meanDest": mean_dest,
        "maxDest": max_dest,
        "meanDest3": mean3,
        "meanDest7": mean7,
        "maxDest3": max3,
        "maxDest7": max7,
        "numTransOrig": num_orig,
        "numTransDest": num_dest,
    }
    X = np.column_stack([columns[name] for name in FEATURE_NAMES])
    y = np.array([r.isFraud for r in rows], dtype=np.int64)
    return list(FEATURE_NAMES), X, y


def raw_sign_facts() -> list[SignFact]:
    """Invariants of the engineered (unscaled) feature space.

    The 3/7-windows include the current amount, so the amount can never
    exceed them; the noise-free columns are nonnegative.
    """
    facts = [
        SignFact({"amount": 1.0, "maxDest7": -1.0}, 0.0),
        SignFact({"amount": 1.0, "maxDest3": -1.0}, 0.0),
        SignFact({"maxDest3": 1.0, "maxDest7": -1.0}, 0.0),
        SignFact({"meanDest3": 1.0, "maxDest3": -1.0}, 0.0),
        SignFact({"meanDest7": 1.0, "maxDest7": -1.0}, 0.0),
    ]
    for name in ("step", "amount", "oldbalanceOrg", "newbalanceOrig",
                 "oldbalanceDest", "newbalanceDest", "meanDest3", "meanDest7",
                 "maxDest3", "maxDest7", "numTransOrig", "numTransDest"):
        facts.append(SignFact({name: -1.0}, 0.0))
    return facts


@dataclass
class Dataset:
    """Engineered feature matrix with labels, split tags and scaler state."""

    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    feature_names: list[str]
    spec: FeatureSpec
    scaler_mean: np.ndarray  # 0 for unscaled columns
    scaler_std: np.ndarray   # 1 for unscaled columns

    def rows(self, which: int) -> np.ndarray:
        return np.flatnonzero(self.split == which)

    def subset(self, which: int):
        idx = self.rows(which)
        return self.X[idx], self.y[idx]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def save(self, directory) -> None:
        """Columnar text dump plus the feature-spec sidecar."""
        import os

        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "dataset.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.feature_names) + ["isFraud", "split"])
            inv_split = {v: k for k, v in SPLIT_NAMES.items()}
            for i in range(len(self.y)):
                writer.writerow([repr(float(v)) for v in self.X[i]]
                                + [int(self.y[i]), inv_split[int(self.split[i])]])
        sidecar = self.spec.to_json()
        sidecar["scaler"] = {
            "mean": {n: float(m) for n, m in zip(self.feature_names, self.scaler_mean)},
            "std": {n: float(s) for n, s in zip(self.feature_names, self.scaler_std)},
        }
        import json

        with open(os.path.join(directory, "featurespec.json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(directory) -> "Dataset":
        import json
        import os

        with open(os.path.join(directory, "featurespec.json")) as fh:
            sidecar = json.load(fh)
        spec = FeatureSpec.from_json(sidecar)
        with open(os.path.join(directory, "dataset.csv"), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            names = header[:-2]
            X_rows, y_rows, split_rows = [], [], []
            for rec in reader:
                X_rows.append([float(v) for v in rec[:-2]])
                y_rows.append(int(rec[-2]))
                split_rows.append(SPLIT_NAMES[rec[-1]])
        scaler = sidecar.get("scaler", {})
        mean = np.array([scaler.get("mean", {}).get(n, 0.0) for n in names])
        std = np.array([scaler.get("std", {}).get(n, 1.0) for n in names])
        return Dataset(np.array(X_rows), np.array(y_rows, dtype=np.int64),
                       np.array(split_rows, dtype=np.int64), names, spec, mean, std)


def split_scale(feature_names, X, y, rng,
                fractions=DEFAULT_FRACTIONS,
                boolean=BOOLEAN_FEATURES,
                one_hot_groups=None,
                sign_facts=None) -> Dataset:
    """Random train/validation/test split plus train-fitted standard scaling.

    Numeric columns are centered and scaled by train statistics; Boolean
    and one-hot columns are left as {0,1}.  Columns with zero train
    variance stay unscaled (with a warning).  Declared sign facts are
    rewritten into the scaled space so rule extraction stays sound.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigInvalid(f"split fractions {fractions} do not sum to 1")
    n = len(y)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    perm = rng.permutation(n)
    split = np.empty(n, dtype=np.int64)
    split[perm[:n_train]] = TRAIN
    split[perm[n_train:n_train + n_val]] = VALIDATION
    split[perm[n_train + n_val:]] = TEST

    X = np.array(X, dtype=np.float64, copy=True)
    mean = np.zeros(X.shape[1])
    std = np.ones(X.shape[1])
    train_rows = split == TRAIN
    for j, name in enumerate(feature_names):
        if name in boolean:
            continue
        mu = X[train_rows, j].mean()
        sd = X[train_rows, j].std()
        if sd == 0.0:
            warnings.warn(f"column {name!r} is constant on the train split; "
                          "left unscaled")
            continue
        mean[j], std[j] = mu, sd
        X[:, j] = (X[:, j] - mu) / sd

    mean_by = {n_: float(m) for n_, m in zip(feature_names, mean)}
    std_by = {n_: float(s) for n_, s in zip(feature_names, std)}
    facts = [f.scaled(mean_by, std_by) for f in (sign_facts or [])]
    groups = one_hot_groups if one_hot_groups is not None else {
        "type": [f"type_{t}" for t in TRANSACTION_TYPES
                 if f"type_{t}" in feature_names]
    }
    spec = FeatureSpec(list(feature_names),
                       set(boolean) & set(feature_names), groups, facts)
    spec.validate()
    return Dataset(X, np.asarray(y, dtype=np.int64), split,
                   list(feature_names), spec, mean, std)


def ingest(rows: list[RawTransaction], rng, fractions=DEFAULT_FRACTIONS,
           noise_scale: float = 0.01) -> Dataset:
    """Full pipeline: engineer features, split, scale, attach sign facts."""
    names, X, y = engineer_features(rows, rng, noise_scale=noise_scale)
    return split_scale(names, X, y, rng, fractions=fractions,
                       sign_facts=raw_sign_facts())


def undersample(ds: Dataset, rng) -> Dataset:
    """Balance the train split: keep every fraud row, sample an equal
    number of legitimate rows; validation and test are untouched."""
    train = ds.rows(TRAIN)
    fraud = train[ds.y[train] == 1]
    legit = train[ds.y[train] == 0]
    if len(fraud) == 0 or len(legit) == 0:
        raise SingleClass("train split does not contain both classes")
    if len(legit) > len(fraud):
        legit = rng.choice(legit, size=len(fraud), replace=False)
    keep = np.zeros(len(ds.y), dtype=bool)
    keep[ds.split != TRAIN] = True
    keep[fraud] = True
    keep[legit] = True
    idx = np.flatnonzero(keep)
    return Dataset(ds.X[idx], ds.y[idx], ds.split[idx], ds.feature_names,
                   ds.spec, ds.scaler_mean, ds.scaler_std)


# ---------------------------------------------------------------------------
# synthetic transactions with a planted rule
# ---------------------------------------------------------------------------

_LEGIT_TYPES = ("cash-in", "cash-out", "debit", "payment", "transfer")
_LEGIT_TYPE_P = (0.22, 0.34, 0.02, 0.34, 0.08)
_EXTERNAL_SHARE = 0.30   # share of non-transfer traffic routed to external accounts
_EXT_TRANSFER_SHARE = 0.25  # share of legit transfers aimed at external accounts


def generate_synthetic(rows: int, fraud_rate: float, seed: int,
                       label_noise: float = 0.0002) -> list[RawTransaction]:
    """Transactions whose fraud labels follow a planted rule.

    Fraud = transfer to an external recipient whose amount is the maximum
    of that recipient's last-7 window (constructively: it beats the
    previous 6).  A fixed count of round(label_noise * rows) labels is
    flipped afterwards.  Deterministic per seed.
    """
    if rows < 100:
        raise ConfigInvalid("need at least 100 rows")
    if not 0.0 < fraud_rate < 0.5:
        raise ConfigInvalid("fraud rate must lie in (0, 0.5)")
    rng = np.random.default_rng(seed)

    n_fraud = int(round(rows * fraud_rate))
    fraud_at = set(rng.choice(rows, size=n_fraud, replace=False).tolist())

    n_orig = max(40, rows // 8)
    n_internal = max(20, rows // 12)
    n_external = max(20, rows // 12)
    orig_names = [f"C{10000 + i}" for i in range(n_orig)]
    internal_names = [f"M{20000 + i}" for i in range(n_internal)]
    external_names = [f"C{90000 + i}" for i in range(n_external)]

    orig_balance = {name: float(b) for name, b in
                    zip(orig_names, rng.uniform(2e3, 2e5, size=n_orig))}
    dest_balance = {name: float(b) for name, b in
                    zip(internal_names, rng.uniform(1e3, 1e5, size=n_internal))}
    history: dict[str, list[float]] = {}
    ext_with_history: list[str] = []

    def window_max(dest: str) -> float:
        h = history.get(dest, [])
        return max(h[-6:]) if h else 0.0

    out = []
    for i in range(rows):
        step = 1 + (i * 720) // rows
        base = float(rng.lognormal(mean=6.0, sigma=1.0))
        if i in fraud_at:
            ttype = "transfer"
            dest = external_names[int(rng.integers(n_external))]
            prior = window_max(dest)
            amount = prior * float(rng.uniform(1.05, 1.9)) if prior > 0 else base
        else:
            ttype = _LEGIT_TYPES[int(rng.choice(len(_LEGIT_TYPES), p=_LEGIT_TYPE_P))]
            if ttype == "transfer":
                use_external = (rng.random() < _EXT_TRANSFER_SHARE
                                and len(ext_with_history) > 0)
                if use_external:
                    dest = ext_with_history[int(rng.integers(len(ext_with_history)))]
                    # stay strictly under the recipient's recent maximum so
                    # the planted rule cannot fire
                    amount = window_max(dest) * float(rng.uniform(0.15, 0.70))
                else:
                    dest = internal_names[int(rng.integers(n_internal))]
                    amount = base
            elif rng.random() < _EXTERNAL_SHARE:
                dest = external_names[int(rng.integers(n_external))]
                amount = base
            else:
                dest = internal_names[int(rng.integers(n_internal))]
                amount = base
        amount = max(0.01, round(amount, 2))

        orig = orig_names[int(rng.integers(n_orig))]
        orig_external = i not in fraud_at and rng.random() < 0.10
        if orig_external:
            old_org = new_org = 0.0
        else:
            bal = orig_balance[orig]
            if bal < amount:
                bal = amount * float(rng.uniform(1.1, 2.5))
            if ttype == "cash-in":
                old_org, new_org = bal, bal + amount
            else:
                old_org, new_org = bal, bal - amount
            orig_balance[orig] = new_org

        if dest in dest_balance:  # internal recipient
            old_dest = dest_balance[dest]
            new_dest = old_dest + amount
            dest_balance[dest] = new_dest
        else:
            old_dest = new_dest = 0.0
            if dest not in history:
                ext_with_history.append(dest)

        hist = history.setdefault(dest, [])
        external = old_dest == 0.0 and new_dest == 0.0
        is_rule = (ttype == "transfer" and external
                   and (not hist or amount >= max(hist[-6:])))
        hist.append(amount)

        out.append(RawTransaction(
            step=step, type=ttype, amount=round(amount, 2), nameOrig=orig,
            oldbalanceOrg=round(old_org, 2), newbalanceOrig=round(new_org, 2),
            nameDest=dest, oldbalanceDest=round(old_dest, 2),
            newbalanceDest=round(new_dest, 2),
            isFlaggedFraud=0, isFraud=int(is_rule),
        ))

    n_flips = int(round(label_noise * rows))
    if n_flips:
        for j in rng.choice(rows, size=n_flips, replace=False):
            out[j].isFraud = 1 - out[j].isFraud
    return out


def planted_rule_labels(names, X) -> np.ndarray:
    """The generator's rule evaluated on engineered (unscaled) features."""
    col = {n: j for j, n in enumerate(names)}
    return ((X[:, col["type_transfer"]] == 1)
            & (X[:, col["externalDest"]] == 1)
            & (X[:, col["amount"]] >= X[:, col["maxDest7"]])).astype(np.int64)
