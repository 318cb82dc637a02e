import numpy as np
import pytest

from conftest import label_dataset
from holdpose.core import BinaryLabel, Phase
from holdpose.evaluation import (
    ConstantClassifier,
    Protocol,
    SplitError,
    SplitManifest,
    audit,
    dataset_statistics,
    evaluate,
    majority_baseline,
    make_split,
    object_combinations,
    row_from_counts,
    score,
    split_pose_group,
    split_random_poses,
    split_uniform,
    split_unseen_objects,
)
from holdpose.evaluation.experiment import (
    ExperimentConfig,
    FeatureBank,
    RunKey,
    Variant,
    protocol_plan,
    run_one,
    summarize,
)
from holdpose.evaluation.report import (
    OBJECT_TABLE_COLUMNS,
    OBJECT_TABLE_ROWS,
    bar_chart,
    deltas,
    full_report,
    object_table,
    pose_table,
    read_results,
    write_results,
)
from holdpose.features import Span
from holdpose.posespace import PoseGroup, group_pose_ids

PASS4 = ("Pass",) * 4


def posed_dataset(n=1600, n_poses=16, n_objects=1, seed=0):
    rng = np.random.default_rng(seed)
    poses = [int(p) for p in (np.arange(n) % n_poses) + 1]
    objects = [f"obj{int(o):02d}" for o in rng.integers(0, n_objects, n)] if n_objects > 1 else None
    return label_dataset([PASS4] * n, poses, objects)


@pytest.fixture(scope="module")
def ds1600():
    return posed_dataset()


@pytest.fixture(scope="module")
def ds_objects():
    return posed_dataset(n=520, n_objects=26, seed=1)


def test_uniform_counts(ds1600):
    m = split_uniform(ds1600, seed=0)
    assert (len(m.train), len(m.val), len(m.test)) == (1100, 250, 250)
    assert split_uniform(ds1600, seed=0) == m
    assert split_uniform(ds1600, seed=1).train != m.train
    assert audit(m, ds1600) == []


def test_uniform_errors(ds1600):
    with pytest.raises(SplitError):
        split_uniform(ds1600, train_fraction=1.0)
    with pytest.raises(SplitError):
        split_uniform(posed_dataset(n=9))


def test_random_poses(ds1600):
    m = split_random_poses(ds1600, held_poses=[3, 7, 9, 12, 15], seed=0)
    by_id = ds1600.by_id()
    assert not {by_id[i].pose_id for i in m.train} & {3, 7, 9, 12, 15}
    assert {by_id[i].pose_id for i in m.train} == set(range(1, 17)) - {3, 7, 9, 12, 15}
    drawn = split_random_poses(ds1600, seed=4)
    assert len(drawn.params["held_out_poses"]) == 5 and len(drawn.train) == 1100
    with pytest.raises(SplitError):
        split_random_poses(ds1600, n_test_poses=16)
    with pytest.raises(SplitError):
        split_random_poses(posed_dataset(n=50, n_poses=5))


def test_pose_group(ds1600):
    by_id = ds1600.by_id()
    m = split_pose_group(ds1600, "G2", seed=0)
    assert {by_id[i].pose_id for i in m.train} <= set(range(1, 7)) | set(range(12, 17))
    assert 1 in {by_id[i].pose_id for i in m.train}
    test_count = {}
    for g in ("G1", "G2", "G3"):
        for i in split_pose_group(ds1600, g, seed=0).test:
            test_count[i] = test_count.get(i, 0) + 1
    # test + val of the three runs cover poses 2..16; each test id appears once
    assert set(test_count.values()) == {1}
    covered = set()
    for g in ("G1", "G2", "G3"):
        mm = split_pose_group(ds1600, g, seed=0)
        covered |= set(mm.test) | set(mm.val)
    assert covered == {c.cycle_id for c in ds1600.cycles if c.pose_id != 1}
    excl = split_pose_group(ds1600, "G1", include_reference=False)
    assert 1 not in {by_id[i].pose_id for i in excl.train}
    with pytest.raises(SplitError):
        split_pose_group(ds1600, "G4")
    with pytest.raises(SplitError):
        split_pose_group(posed_dataset(n=60, n_poses=6), "G3")


def test_group_poses_partition():
    assert group_pose_ids(PoseGroup.G2) == tuple(range(7, 12))


def test_unseen_objects(ds_objects):
    m = split_unseen_objects(ds_objects, seed=0)
    by_id = ds_objects.by_id()
    train_objs = {by_id[i].object_id for i in m.train}
    assert len(train_objs) == 22
    assert not train_objs & {by_id[i].object_id for i in m.test}
    combos = object_combinations({c.object_id for c in ds_objects.cycles}, 20)
    assert len(set(combos)) == 20 and all(len(c) == 4 for c in combos)
    with pytest.raises(SplitError):
        split_unseen_objects(posed_dataset(n=40, n_objects=4, seed=2))
    with pytest.raises(SplitError):
        split_unseen_objects(ds_objects, held_objects=["nope"])


def test_filtered_cycles_never_placed():
    rows = [PASS4] * 30 + [("Drop", "NotPresent", "NotPresent", "NotPresent")] * 5
    d = label_dataset(rows)
    m = split_uniform(d, seed=0)
    placed = set(m.train) | set(m.val) | set(m.test)
    assert len(placed) == 30 and not placed & {f"c{i:04d}" for i in range(30, 35)}


def test_manifest_round_trip_and_disjointness(tmp_path, ds1600):
    m = make_split(ds1600, "pose-group", seed=2, held_group="G3")
    m.save(tmp_path / "m.json")
    assert SplitManifest.load(tmp_path / "m.json") == m
    with pytest.raises(SplitError):
        SplitManifest(Protocol.UNIFORM, 0, ("a",), ("a",), ("b",))


def test_audit_flags_leakage(ds1600):
    m = split_uniform(ds1600, seed=0)
    leaky = SplitManifest.__new__(SplitManifest)
    object.__setattr__(leaky, "protocol", Protocol.RANDOM_POSES)
    object.__setattr__(leaky, "seed", 0)
    object.__setattr__(leaky, "train", m.train)
    object.__setattr__(leaky, "val", m.val[:100])
    object.__setattr__(leaky, "test", m.test)
    object.__setattr__(leaky, "params", {})
    problems = audit(leaky, ds1600)
    assert any("units shared" in p for p in problems)
    assert any("50/50" in p for p in problems)


def test_majority_examples():
    clf = majority_baseline([0] * 60 + [1] * 40)
    assert clf.label is BinaryLabel.STABLE
    y = np.array([0] * 6321 + [1] * 3679)
    assert evaluate(clf, np.zeros((10000, 1, 1)), y, y).accuracy == 0.6321
    assert majority_baseline([0, 0, 0]).label is BinaryLabel.STABLE
    assert majority_baseline([0, 1, 1, 0]).label is BinaryLabel.STABLE
    assert majority_baseline([1, 1, 0]).label is BinaryLabel.NOT_STABLE
    with pytest.raises(ValueError):
        majority_baseline([])


def test_majority_sneq_zero():
    y_shake = np.array([0] * 8 + [1] * 2)
    y_pose = np.array([0] * 8 + [0] * 2)  # both S-neq members fail only at the shake
    m = evaluate(majority_baseline([0, 0, 1]), np.zeros((10, 1, 1)), y_shake, y_pose)
    assert m.accuracy_on_sneq == 0.0 and m.n_sneq == 2


def test_score_examples():
    y = np.array([0, 1, 1, 0, 1])
    m = score(y, y, y)
    assert m.accuracy == 1.0 and m.confusion[0, 1] == m.confusion[1, 0] == 0
    assert np.isnan(m.accuracy_on_sneq)
    y = np.array([0] * 6 + [1] * 4)
    m = evaluate(ConstantClassifier(BinaryLabel.STABLE), np.zeros((10, 2, 3)), y, y)
    assert m.accuracy == 0.6 and m.confusion.sum() == m.n == 10
    assert m.confusion.tolist() == [[6, 0], [4, 0]]
    with pytest.raises(ValueError):
        evaluate(ConstantClassifier(BinaryLabel.STABLE), np.zeros((0, 2, 3)), [], [])


@pytest.mark.parametrize("counts, text", [((1037, 778, 25), "43.64%"), ((1278, 192, 345), "29.18%"),
                                          ((1003, 255, 365), "33.69%")])
def test_statistics_percentages(counts, text):
    assert row_from_counts(Phase.GRASP, *counts, n_cycles=1840).percent_text() == text


def test_statistics_on_labels():
    rows = [PASS4] * 3 + [("Slip", "Pass", "Drop", "NotPresent")] + [("Drop",) + ("NotPresent",) * 3]
    st = dataset_statistics(label_dataset(rows))
    assert st.counts()["grasp"] == {"Pass": 3, "Slip": 1, "Drop": 1, "NotPresent": 0}
    assert st.counts()["shake"] == {"Pass": 3, "Slip": 0, "Drop": 1, "NotPresent": 1}
    assert st.row(Phase.GRASP).percent_text() == "40.00%"
    assert dataset_statistics(label_dataset([PASS4] * 4)).row(Phase.SHAKE).percent_text() == "0.00%"
    assert "Grasp" in st.format() and st.to_csv().splitlines()[1].startswith("Grasp,3,1,1,0,40.00")
    from holdpose.core import Dataset

    with pytest.raises(ValueError):
        dataset_statistics(Dataset(()))


def test_protocol_plans(ds_objects):
    assert len(protocol_plan("Uniform")) == 15
    pg = protocol_plan("PoseGroup")
    assert len(pg) == 15 and {dict(p)["held_group"] for _, _, p in pg} == {"G1", "G2", "G3"}
    uo = protocol_plan("UnseenObjects", ds_objects)
    assert len(uo) == 100 and len({p for _, _, p in uo}) == 20
    with pytest.raises(ValueError):
        protocol_plan("UnseenObjects")


def test_variant_parsing_and_spans():
    assert Variant.parse("lstm-drs") is Variant.LSTM_DRS
    assert Variant.parse("lstm_wc").span is Span.GRASP_TO_RELEASE_END
    assert Variant.parse("LSTM-P").span is Span.GRASP_TO_POSE_END
    with pytest.raises(ValueError):
        Variant.parse("gru")


TINY = ExperimentConfig(hidden=8, embed_dim=8, n_steps=5, iterations=6, anneal_at=3, batch_size=32)


@pytest.fixture(scope="module")
def small_bank(small_dataset):
    return FeatureBank.for_config(small_dataset, TINY)


def test_majority_row_identical_across_modalities(small_bank):
    rows = [run_one(small_bank, RunKey(Protocol.UNIFORM, Variant.MAJORITY, m, 0, 0), TINY).row()
            for m in ("T", "V", "VT")]
    assert len({(r["accuracy"], r["accuracy_on_Sneq"], r["n_test"]) for r in rows}) == 1


@pytest.mark.parametrize("variant", [Variant.LSTM_DRS, Variant.LSTM_P, Variant.LSTM_WC, Variant.LINEAR])
def test_run_one_is_reproducible(small_bank, variant):
    key = RunKey(Protocol.UNIFORM, variant, "VT", 1, 0)
    a, b = run_one(small_bank, key, TINY), run_one(small_bank, key, TINY)
    assert a.row() == b.row()
    assert a.metrics.confusion.tolist() == b.metrics.confusion.tolist()
    assert (a.sigma == 1.0) == (variant is Variant.LSTM_DRS)
    assert 0.0 <= a.metrics.accuracy <= 1.0 and a.metrics.n == len(a.manifest.test)


def test_standardizer_is_fit_on_train_only(small_bank):
    from holdpose.features import fit_standardizer

    key = RunKey(Protocol.UNIFORM, Variant.MAJORITY, "T", 0, 0)
    res = run_one(small_bank, key, TINY)
    ref = fit_standardizer(small_bank.get(res.manifest.train, "T", Span.GRASP_TO_POSE_END))
    np.testing.assert_array_equal(res.standardizer.mean, ref.mean)


def fake_rows():
    rows = []
    for v in Variant:
        for m, base in (("V", 0.7), ("T", 0.72), ("VT", 0.75)):
            for s in range(3):
                rows.append({"protocol": "UnseenObjects", "variant": v.value, "modalities": m, "seed": s,
                             "split_seed": s, "accuracy": base + 0.01 * s, "accuracy_on_Sneq": 0.5,
                             "n_test": 100})
    for p in ("Uniform", "PoseGroup", "RandomPoses"):
        for m in ("V", "T", "VT"):
            rows.append({"protocol": p, "variant": "LSTM+DRS", "modalities": m, "seed": 0, "split_seed": 0,
                         "accuracy": 0.8, "accuracy_on_Sneq": 0.6, "n_test": 50})
    return rows


def test_summaries_and_tables():
    sums = summarize(fake_rows())
    s = next(x for x in sums if x.variant == "LSTM" and x.modalities == "VT")
    assert s.mean == pytest.approx(0.76) and s.std == pytest.approx(np.std([0.75, 0.76, 0.77]))
    table = object_table(sums)
    for _, label in OBJECT_TABLE_ROWS:
        assert label in table
    for _, label in OBJECT_TABLE_COLUMNS:
        assert label in table
    assert "76.00 ± 0.82" in table
    pt = pose_table(sums)
    assert "Pose Group" in pt and "Vision + Tactile" in pt and "80.00 ± 0.00" in pt
    assert any("LSTM+DRS - LSTM = +0.00" in d for d in deltas(sums))
    assert "Differences" in full_report(fake_rows())


def test_results_file_round_trip(tmp_path):
    rows = fake_rows()
    write_results(tmp_path / "r.csv", rows[:5])
    write_results(tmp_path / "r.csv", rows[5:], append=True)
    back = read_results(tmp_path / "r.csv")
    assert len(back) == len(rows)
    assert back[0]["accuracy"] == rows[0]["accuracy"] and back[0]["seed"] == 0
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "protocol,variant,modalities,seed,split_seed,accuracy,accuracy_on_Sneq,n_test"


def test_bar_chart(tmp_path):
    path = bar_chart(summarize(fake_rows()), tmp_path / "c.svg", "t")
    assert path.read_text().lstrip().startswith("<?xml")
