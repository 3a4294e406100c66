import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histoclass import evaluation as ev
from histoclass.imaging import ClassLabel, SourceImage

TINY = np.zeros((300, 300, 3), np.uint8)


def fake_images(per_class=50, patients=None):
    out = []
    for c in ClassLabel:
        for i in range(per_class):
            pid = f"{c.dirname}_p{i // patients}" if patients else ""
            out.append(SourceImage(TINY, c, f"{c.dirname}_{i:03d}", pid))
    return out


class StubMethod:
    """Scores patches from the label planted by ``prepare``."""
    name = "stub"
    model_suffix = ".stub"

    def __init__(self, mode="perfect"):
        self.mode = mode

    def describe(self):
        return {"method": self.name, "mode": self.mode}

    def prepare(self, img):
        return np.full((20, 1), int(img.label), dtype=float)

    def fit(self, X, y, groups):
        return None, {"n_train": len(y)}

    def scores(self, model, X):
        out = np.zeros((len(X), 4))
        if self.mode == "perfect":
            out[np.arange(len(X)), X[:, 0].astype(int)] = 1.0
        else:
            out[:, 0] = 1.0
        return out

    def save(self, model, path):
        open(path, "w").write("stub")


def test_fold_plan_sizes():
    images = fake_images()
    plan = ev.make_folds(images, 5, seed=0)
    assert len(plan) == 5
    labels = {im.image_id: int(im.label) for im in images}
    for f in plan:
        assert len(f.train_ids) == 160 and len(f.test_ids) == 40
        assert not set(f.train_ids) & set(f.test_ids)
        for c in range(4):
            assert sum(labels[i] == c for i in f.test_ids) == 10
            assert sum(labels[i] == c for i in f.train_ids) == 40
    tested = [i for f in plan for i in f.test_ids]
    assert sorted(tested) == sorted(labels)
    assert 20 * len(plan.folds[0].train_ids) == 3200


def test_fold_plan_deterministic_and_seeded():
    images = fake_images()
    assert ev.make_folds(images, 5, 3) == ev.make_folds(images, 5, 3)
    assert ev.make_folds(images, 5, 3) != ev.make_folds(images, 5, 4)


def test_fold_plan_errors():
    with pytest.raises(ValueError):
        ev.make_folds(fake_images(), 1)
    with pytest.raises(ValueError):
        ev.make_folds(fake_images(4), 5)


def test_fold_plan_patient_groups():
    images = fake_images(50, patients=3)
    plan = ev.make_folds(images, 5, 0, group_by_patient=True)
    patient = {im.image_id: im.patient_id for im in images}
    for f in plan:
        assert not {patient[i] for i in f.train_ids} & {patient[i] for i in f.test_ids}
    assert sorted(i for f in plan for i in f.test_ids) == sorted(patient)


def test_vote_examples():
    cls, mean = ev.vote([[0.6, 0.4, 0, 0], [0.2, 0.8, 0, 0]])
    assert cls == 1
    np.testing.assert_allclose(mean, [0.4, 0.6, 0, 0])
    assert ev.vote([[0.1, 0.2, 0.7, 0.0]])[0] == 2
    assert ev.vote([[0.5, 0.5, 0, 0]])[0] == 0
    with pytest.raises(ValueError):
        ev.vote([])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-5, 5))
def test_vote_invariant_under_positive_affine_map(n, seed, a, b):
    s = np.random.default_rng(seed).random((n, 4))
    assert ev.vote(s)[0] == ev.vote(a * s + b)[0]


def test_collapse_examples():
    np.testing.assert_array_equal(ev.collapse(np.diag([10, 10, 10, 10])), [[10, 0], [0, 30]])
    cm = np.diag([5, 0, 5, 5])
    cm[1, 2] = 7
    out = ev.collapse(cm)
    assert out[0, 1] == 0 and out[1, 0] == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=16, max_size=16))
def test_collapse_preserves_totals_and_normal(counts):
    cm = np.array(counts).reshape(4, 4)
    out = ev.collapse(cm)
    assert out.sum() == cm.sum()
    assert out[0, 0] == cm[0, 0]
    assert out[0, 1] == cm[0, 1:].sum()
    assert out[1, 0] == cm[1:, 0].sum()


def test_metrics_examples():
    m = ev.metrics(np.array([[8, 2], [1, 9]]))
    assert (m.tp, m.fn, m.tn, m.fp) == (9, 1, 8, 2)
    assert m.sen == 0.9 and m.spe == 0.8 and m.acc == 0.85 and m.ppr == 9 / 11
    perfect = ev.metrics(np.array([[3, 0], [0, 4]]))
    assert (perfect.acc, perfect.sen, perfect.spe, perfect.ppr) == (1.0, 1.0, 1.0, 1.0)
    no_pos = ev.metrics(np.array([[5, 0], [0, 0]]))
    assert "sen" in no_pos.undefined and math.isnan(no_pos.sen)
    assert no_pos.to_dict()["sen"] is None


def test_diagonal_gives_all_ones():
    m = ev.metrics(ev.collapse(np.diag([3, 4, 5, 6])))
    assert (m.acc, m.sen, m.spe, m.ppr) == (1.0, 1.0, 1.0, 1.0)
    assert m.undefined == ()


def test_perfect_stub_experiment(tmp_path):
    images = fake_images()
    plan = ev.make_folds(images, 5, 0)
    rep = ev.run_experiment(images, StubMethod(), plan, model_dir=tmp_path / "models", seed=0)
    np.testing.assert_array_equal(rep.cm4, np.diag([50] * 4))
    assert rep.identification_accuracy == 1.0
    d = rep.detection
    assert (d.acc, d.sen, d.spe, d.ppr) == (1.0, 1.0, 1.0, 1.0)
    assert all(f.fit_info["n_train"] == 3200 for f in rep.folds)
    assert len(list((tmp_path / "models").iterdir())) == 5
    rep.write_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["cm_final"] == np.diag([50] * 4).tolist()
    assert len(data["per_fold"]) == 5
    assert sum(len(f["images"]) for f in data["per_fold"]) == 200


def test_constant_normal_stub():
    images = fake_images()
    rep = ev.run_experiment(images, StubMethod("normal"), ev.make_folds(images, 5, 0))
    d = rep.detection
    assert d.acc == 0.25 and d.spe == 1.0 and d.sen == 0.0
    assert "ppr" in d.undefined
    assert rep.cm4.sum() == 200


def test_csv_row(tmp_path):
    images = fake_images(5)
    rep = ev.run_experiment(images, StubMethod(), ev.make_folds(images, 5, 0))
    ev.append_csv(tmp_path / "s.csv", [rep.csv_row()])
    ev.append_csv(tmp_path / "s.csv", [rep.csv_row()])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == list(ev.CSV_FIELDS)
    assert len(lines) == 3
    assert rep.csv_row()["detection"] == 100.0


def test_plan_must_cover_dataset():
    images = fake_images(5)
    plan = ev.make_folds(images, 5, 0)
    with pytest.raises(ValueError):
        ev.run_experiment(images[:-1], StubMethod(), plan)


def test_parallel_folds_match_sequential():
    images = fake_images(5)
    plan = ev.make_folds(images, 5, 0)
    a = ev.run_experiment(images, StubMethod(), plan, jobs=1)
    b = ev.run_experiment(images, StubMethod(), plan, jobs=2)
    np.testing.assert_array_equal(a.cm4, b.cm4)
    assert [f.index for f in b.folds] == list(range(5))
