import numpy as np
import pytest

from saver.feeder import chain_feeder, ieee13
from saver.harness.experiment import evaluate, make_controller
from saver.harness.metrics import summarize
from saver.harness.profiles import (LoadDataset, ProfileError, distribute, ingest_profiles,
                                    read_timeseries, synthetic_dataset, synthetic_pv)
from saver.harness.scenarios import StressScenario


def _csv(tmp_path, rows, name="d.csv"):
    path = tmp_path / name
    path.write_text("\n".join(rows) + "\n")
    return path


def test_constant_demand_split_by_weights(tmp_path):
    f = chain_feeder(2)
    rows = ["timestamp,mw"] + [f"2024-01-01T{h:02d}:00:00,1.0" for h in range(24)]
    rows.append("2024-01-02T00:00:00,1.0")
    ds = ingest_profiles(_csv(tmp_path, rows), f, weights=[0.6, 0.4], step_minutes=60)
    assert ds.p.shape == (1, 24, 2)
    np.testing.assert_allclose(ds.p[0], np.tile([-0.6, -0.4], (24, 1)))


def test_gap_is_reported_with_interval(tmp_path):
    rows = ["timestamp,mw", "2024-01-01T00:00:00,1", "2024-01-01T00:05:00,1",
            "2024-01-01T00:20:00,1", "2024-01-01T00:25:00,1"]
    with pytest.raises(ProfileError, match="00:05:00 and 2024-01-01T00:20:00"):
        read_timeseries(_csv(tmp_path, rows))


def test_non_monotone_timestamps(tmp_path):
    rows = ["timestamp,mw", "2024-01-01T00:05:00,1", "2024-01-01T00:00:00,1"]
    with pytest.raises(ProfileError, match="not increasing"):
        read_timeseries(_csv(tmp_path, rows))


@pytest.mark.parametrize("rows, message", [
    (["timestamp,mw", "2024-01-01T00:00:00,1,2"], r":2: expected 2 fields"),
    (["timestamp,mw", "yesterday,1"], "bad timestamp"),
    (["timestamp,mw", "2024-01-01T00:00:00,abc"], "non-numeric"),
    (["timestamp,mw", "2024-01-01T00:00:00,nan"], "non-finite"),
    (["timestamp,mw"], "no data rows"),
])
def test_malformed_rows(tmp_path, rows, message):
    with pytest.raises(ProfileError, match=message):
        read_timeseries(_csv(tmp_path, rows))


def test_empty_file(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("")
    with pytest.raises(ProfileError, match="empty"):
        read_timeseries(path)


def test_weights_validation():
    f = chain_feeder(2)
    with pytest.raises(ProfileError):
        distribute(f, np.ones(3), weights=[0.7, 0.7])
    with pytest.raises(ProfileError):
        distribute(f, np.ones(3), weights={5: 1.0})
    p, q = distribute(f, np.ones(3), weights={1: 0.25, 2: 0.75}, power_factor=1.0)
    np.testing.assert_allclose(p[0], [-0.25, -0.75])
    np.testing.assert_allclose(q, 0.0, atol=1e-15)


def test_pv_adds_positive_injection():
    f = chain_feeder(2)
    pv = np.zeros((3, 2))
    pv[:, 1] = 0.5
    p, _ = distribute(f, np.zeros(3), weights=[0.5, 0.5], pv_mw=pv)
    np.testing.assert_allclose(p[:, 1], 0.5)


def test_twenty_synthetic_days():
    f = ieee13()
    ds = synthetic_dataset(f, 20, step_minutes=5, seed=4, test_days=5)
    assert ds.p.shape == (20, 288, f.n)
    assert len(ds.days("train")) == 15 and len(ds.days("test")) == 5
    assert np.all(ds.p <= 0)                           # no PV: every bus consumes
    assert ds.subset("test").n_days == 5
    again = synthetic_dataset(f, 20, step_minutes=5, seed=4, test_days=5)
    assert np.array_equal(ds.p, again.p)


def test_pv_shape_is_daylight_only():
    pv = synthetic_pv(3, 15, np.random.default_rng(0), cloudiness=0.5)
    h = np.arange(96) * 0.25
    assert np.all(pv[:, (h < 6) | (h > 18)] == 0)
    assert np.all((pv >= 0) & (pv <= 1))
    assert pv.max() > 0.8


def test_light_day_has_no_noop_violations():
    f = ieee13()
    ds = synthetic_dataset(f, 1, step_minutes=30, seed=0, peak_mw=1.5)
    recs = evaluate(f, make_controller("noop", f), ds)
    assert summarize(recs, f.base_mva)["noop"].violation_pct == 0.0


def test_stress_scenario_shapes():
    sc = StressScenario()
    f = sc.feeder()
    ds = sc.dataset(f)
    assert ds.n_days == sc.train_days + sc.test_days
    assert len(ds.days("test")) == sc.test_days
    assert ds.p.max() > 0                              # PV exports at midday


def test_dataset_validation():
    with pytest.raises(ProfileError):
        LoadDataset(np.zeros((1, 2, 3)), np.zeros((1, 2, 2)), 5.0, ["train"])
    with pytest.raises(ProfileError):
        LoadDataset(np.full((1, 2, 3), np.nan), np.zeros((1, 2, 3)), 5.0, ["train"])
