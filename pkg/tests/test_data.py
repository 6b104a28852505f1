import numpy as np
import pytest

from symclf.data import (
    Dataset,
    FEATURE_NAMES,
    RawTransaction,
    engineer_features,
    generate_synthetic,
    ingest,
    load_csv,
    planted_rule_labels,
    raw_sign_facts,
    split_scale,
    undersample,
    write_csv,
)
from symclf.errors import ConfigInvalid, CsvParseError, SchemaMismatch, SingleClass

HEADER = ("step,type,amount,nameOrig,oldbalanceOrg,newbalanceOrig,"
          "nameDest,oldbalanceDest,newbalanceDest,isFlaggedFraud,isFraud\n")


def tx(step=1, type="payment", amount=10.0, orig="C1", old_org=100.0,
       new_orig=90.0, dest="M1", old_dest=0.0, new_dest=0.0, fraud=0):
    return RawTransaction(step, type, amount, orig, old_org, new_orig,
                          dest, old_dest, new_dest, 0, fraud)


class TestLoadCsv:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(HEADER
                     + "1,TRANSFER,10.0,C1,100,90,M1,0,10,0,0\n"
                     + "2,CASH_OUT,5.0,C2,50,45,M2,0,0,0,1\n"
                     + "3,payment,1.0,C3,10,9,M3,1,2,0,0\n")
        rows = load_csv(p)
        assert len(rows) == 3
        assert rows[0].type == "transfer"
        assert rows[1].type == "cash-out"
        assert rows[1].isFraud == 1

    def test_missing_column(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(HEADER.replace(",isFraud", "") + "1,payment,1,C1,1,0,M1,0,0,0\n")
        with pytest.raises(SchemaMismatch, match="isFraud"):
            load_csv(p)

    def test_negative_amount_reports_row(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(HEADER
                     + "1,payment,1.0,C1,10,9,M1,0,0,0,0\n"
                     + "2,payment,-5.0,C1,10,9,M1,0,0,0,0\n")
        with pytest.raises(CsvParseError) as err:
            load_csv(p)
        assert err.value.row == 2

    def test_header_order_insensitive(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("isFraud,step,type,amount,nameOrig,oldbalanceOrg,"
                     "newbalanceOrig,nameDest,oldbalanceDest,newbalanceDest,"
                     "isFlaggedFraud\n"
                     "0,1,debit,2.0,C1,5,3,M1,0,0,0\n")
        assert load_csv(p)[0].type == "debit"

    def test_write_read_round_trip(self, tmp_path):
        rows = [tx(step=i, amount=float(i)) for i in range(1, 6)]
        p = tmp_path / "out.csv"
        write_csv(rows, p)
        assert [r.amount for r in load_csv(p)] == [1.0, 2.0, 3.0, 4.0, 5.0]


def col(names, X, name):
    return X[:, names.index(name)]


class TestEngineerFeatures:
    def test_feature_list(self):
        names, X, y = engineer_features([tx()], np.random.default_rng(0))
        assert names == list(FEATURE_NAMES)
        assert X.shape == (1, len(FEATURE_NAMES))

    def test_single_transaction_windows_include_current(self):
        rows = [tx(amount=42.0, dest="M9")]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        assert col(names, X, "maxDest7")[0] == 42.0
        assert col(names, X, "maxDest3")[0] == 42.0
        assert col(names, X, "meanDest7")[0] == 42.0
        # nothing else to aggregate over the whole history
        assert col(names, X, "meanDest")[0] == 0.0
        assert col(names, X, "numTransDest")[0] == 1.0

    def test_external_dest_imputation(self):
        rows = [tx(amount=100.0, old_dest=0.0, new_dest=0.0)]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        assert col(names, X, "externalDest")[0] == 1.0
        assert col(names, X, "newbalanceDest")[0] == 100.0

    def test_external_orig_imputation(self):
        rows = [tx(amount=25.0, old_org=0.0, new_orig=0.0)]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        assert col(names, X, "externalOrig")[0] == 1.0
        assert col(names, X, "oldbalanceOrg")[0] == 25.0

    def test_internal_rows_not_flagged(self):
        rows = [tx(old_dest=5.0, new_dest=15.0, old_org=10.0, new_orig=0.0)]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        assert col(names, X, "externalDest")[0] == 0.0
        assert col(names, X, "externalOrig")[0] == 0.0

    def test_mean_dest_excludes_current_zero_noise(self):
        rows = [
            tx(step=1, amount=10.0, dest="M5"),
            tx(step=2, amount=20.0, dest="M5"),
            tx(step=3, amount=30.0, dest="M5"),
        ]
        names, X, _ = engineer_features(rows, np.random.default_rng(0),
                                        noise_scale=0.0)
        assert col(names, X, "meanDest")[2] == 15.0   # (10+20)/2
        assert col(names, X, "meanDest")[0] == 25.0   # includes future rows
        assert col(names, X, "maxDest")[2] == 20.0
        assert col(names, X, "maxDest")[0] == 30.0

    def test_windows_never_read_future(self):
        rows = [
            tx(step=1, amount=10.0, dest="M5"),
            tx(step=2, amount=999.0, dest="M5"),
        ]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        assert col(names, X, "maxDest7")[0] == 10.0
        assert col(names, X, "maxDest7")[1] == 999.0

    def test_seven_window_slides(self):
        rows = [tx(step=i, amount=float(100 - i), dest="M1") for i in range(10)]
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        # row 9 sees amounts 91..97 (positions 3..9)
        assert col(names, X, "maxDest7")[9] == 97.0
        assert col(names, X, "maxDest3")[9] == 93.0

    def test_one_hot_sums_to_one(self):
        rows = generate_synthetic(500, 0.02, seed=1)
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        onehots = np.column_stack([col(names, X, f"type_{t}") for t in
                                   ("cash-in", "cash-out", "debit", "payment",
                                    "transfer")])
        np.testing.assert_array_equal(onehots.sum(axis=1), 1.0)

    def test_noise_sigma_zero_for_single_transaction_accounts(self):
        rows = [tx(orig="Conce", dest="Monce", amount=7.0)]
        names, X, _ = engineer_features(rows, np.random.default_rng(12))
        # q75 == min for a single amount, so the noise collapses to zero
        assert col(names, X, "meanOrig")[0] == 0.0
        assert col(names, X, "maxOrig")[0] == 0.0


class TestSplitScale:
    def make(self, n=10_000, seed=0):
        rows = generate_synthetic(n, 0.01, seed=seed)
        rng = np.random.default_rng(seed)
        names, X, y = engineer_features(rows, rng)
        return split_scale(names, X, y, rng, sign_facts=raw_sign_facts())

    def test_split_sizes(self):
        ds = self.make()
        n = len(ds.y)
        assert abs(int(np.sum(ds.split == 0)) - 7500) <= 0.005 * n
        assert abs(int(np.sum(ds.split == 1)) - 1000) <= 0.005 * n
        assert abs(int(np.sum(ds.split == 2)) - 1500) <= 0.005 * n

    def test_train_columns_standardized(self):
        ds = self.make()
        tr = ds.X[ds.split == 0]
        for j, name in enumerate(ds.feature_names):
            if name in ds.spec.boolean:
                assert set(np.unique(ds.X[:, j])) <= {0.0, 1.0}
            else:
                assert abs(tr[:, j].mean()) < 1e-9
                assert abs(tr[:, j].std() - 1.0) < 1e-9

    def test_constant_column_warns_and_stays(self):
        names = ["a", "b"]
        X = np.column_stack([np.ones(100), np.arange(100.0)])
        y = np.r_[np.zeros(50, dtype=int), np.ones(50, dtype=int)]
        with pytest.warns(UserWarning, match="constant"):
            ds = split_scale(names, X, y, np.random.default_rng(0),
                             boolean=frozenset(), one_hot_groups={})
        assert np.all(ds.X[:, 0] == 1.0)

    def test_scaled_sign_facts_hold(self):
        ds = self.make(n=4000)
        idx = {n: j for j, n in enumerate(ds.feature_names)}
        for fact in ds.spec.sign_facts:
            total = sum(c * ds.X[:, idx[n]] for n, c in fact.coeffs.items())
            assert np.all(total <= fact.bound + 1e-9)

    def test_save_load_round_trip(self, tmp_path):
        ds = self.make(n=500)
        ds.save(tmp_path / "d")
        back = Dataset.load(tmp_path / "d")
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.y, ds.y)
        np.testing.assert_array_equal(back.split, ds.split)
        assert back.feature_names == ds.feature_names
        assert back.spec.boolean == ds.spec.boolean


class TestUndersample:
    def make(self, n_fraud=10, n_legit=990, test_rows=100):
        y = np.r_[np.ones(n_fraud, dtype=int), np.zeros(n_legit, dtype=int)]
        X = np.random.default_rng(0).normal(size=(len(y), 2))
        split = np.zeros(len(y), dtype=np.int64)
        if test_rows:
            split[-test_rows:] = 2  # carve the test split out of the legit tail
        from symclf.featurespec import FeatureSpec

        return Dataset(X, y, split, ["a", "b"], FeatureSpec(["a", "b"]),
                       np.zeros(2), np.ones(2))

    def test_balanced_output(self):
        ds = self.make()
        out = undersample(ds, np.random.default_rng(1))
        ytr = out.y[out.split == 0]
        assert int(ytr.sum()) == 10
        assert len(ytr) == 20

    def test_all_fraud_retained(self):
        ds = self.make()
        fraud_rows = ds.X[(ds.split == 0) & (ds.y == 1)]
        out = undersample(ds, np.random.default_rng(2))
        kept = out.X[(out.split == 0) & (out.y == 1)]
        assert {tuple(r) for r in fraud_rows} == {tuple(r) for r in kept}

    def test_already_balanced_unchanged(self):
        ds = self.make(n_fraud=100, n_legit=100, test_rows=0)
        out = undersample(ds, np.random.default_rng(3))
        assert len(out.y) == len(ds.y)

    def test_single_class_raises(self):
        ds = self.make()
        ds.y[:] = 0
        with pytest.raises(SingleClass):
            undersample(ds, np.random.default_rng(4))


class TestSyntheticGenerator:
    def test_fraud_count_near_target(self):
        rows = generate_synthetic(50_000, 0.01, seed=5)
        n_fraud = sum(r.isFraud for r in rows)
        assert abs(n_fraud - 500) <= 50

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(generate_synthetic(2000, 0.02, seed=9), a)
        write_csv(generate_synthetic(2000, 0.02, seed=9), b)
        assert a.read_bytes() == b.read_bytes()

    def test_invariants(self):
        rows = generate_synthetic(3000, 0.05, seed=2)
        for r in rows:
            assert r.amount >= 0
            assert min(r.oldbalanceOrg, r.newbalanceOrig,
                       r.oldbalanceDest, r.newbalanceDest) >= 0
            assert r.isFraud in (0, 1)
        steps = [r.step for r in rows]
        assert steps == sorted(steps)

    def test_config_validation(self):
        with pytest.raises(ConfigInvalid):
            generate_synthetic(50, 0.01, seed=0)
        with pytest.raises(ConfigInvalid):
            generate_synthetic(1000, 0.6, seed=0)

    def test_planted_rule_oracle_f1(self):
        rows = generate_synthetic(20_000, 0.01, seed=7)
        names, X, y = engineer_features(rows, np.random.default_rng(7))
        pred = planted_rule_labels(names, X)
        from symclf.classify import f1_score

        assert f1_score(pred, y) >= 0.98

    def test_imputation_identities_on_all_external_rows(self):
        rows = generate_synthetic(5000, 0.02, seed=3)
        raw_new_dest = np.array([r.newbalanceDest for r in rows])
        raw_old_dest = np.array([r.oldbalanceDest for r in rows])
        raw_old_org = np.array([r.oldbalanceOrg for r in rows])
        raw_new_orig = np.array([r.newbalanceOrig for r in rows])
        amount = np.array([r.amount for r in rows])
        names, X, _ = engineer_features(rows, np.random.default_rng(0))
        ext_d = col(names, X, "externalDest") == 1.0
        ext_o = col(names, X, "externalOrig") == 1.0
        # indicator reflects the raw balances; identity holds post-imputation
        np.testing.assert_array_equal(
            ext_d, (raw_old_dest == 0) & (raw_new_dest == 0))
        np.testing.assert_array_equal(
            ext_o, (raw_old_org == 0) & (raw_new_orig == 0))
        np.testing.assert_allclose(
            col(names, X, "newbalanceDest")[ext_d],
            (raw_old_dest + amount)[ext_d])
        np.testing.assert_allclose(
            col(names, X, "oldbalanceOrg")[ext_o],
            (raw_new_orig + amount)[ext_o])


class TestIngest:
    def test_pipeline_deterministic(self):
        rows = generate_synthetic(2000, 0.02, seed=4)
        a = ingest(rows, np.random.default_rng(11))
        b = ingest(rows, np.random.default_rng(11))
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.split, b.split)
