import numpy as np
import pytest

from saver.harness.experiment import EpisodeRecord
from saver.harness.metrics import (load_records, report, save_records, summarize,
                                   violation_mask)


def make_record(method, v, action=None, day=0, step_time=1e-3):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    T, nb = v.shape
    n = nb - 1
    action = np.zeros((T, 2)) if action is None else np.asarray(action, dtype=float)
    c = action.shape[1]
    return EpisodeRecord(method, day, np.zeros((T, 2 * n)), action.copy(), action,
                         np.full(T, -1), np.zeros(T, dtype=int), np.zeros(T), v, np.ones((T, n)),
                         -np.ones(T), np.full(T, step_time), np.zeros(T))


def test_band_edges():
    mag = np.array([0.949, 0.95, 1.0, 1.05, 1.051])
    np.testing.assert_array_equal(violation_mask(mag ** 2), [True, False, False, False, True])


def test_one_bus_of_thirteen():
    v = np.ones((1, 13))
    v[0, 7] = 1.06 ** 2
    s = summarize([make_record("noop", v)])
    assert s["noop"].violation_pct == pytest.approx(100 / 13)
    assert round(s["noop"].violation_pct, 2) == 7.69


def test_zero_actions_give_zero_kvar():
    s = summarize([make_record("noop", np.ones((4, 3)))], base_mva=5.0)
    assert s["noop"].mean_abs_q_kvar == 0.0


def fixture_records():
    # method a: one bad (bus, step) out of 2 x 3, |q| = 0.1 pu
    a = make_record("a", [[1.0, 1.0, 0.9 ** 2], [1.0, 1.0, 1.0]], np.full((2, 2), -0.1), step_time=2e-3)
    # method b over two days: nothing outside the band, actions 0 and 0.2
    b0 = make_record("b", [[1.0, 1.02 ** 2, 0.98 ** 2]], np.zeros((1, 2)))
    b1 = make_record("b", [[1.0, 1.0, 1.0]], np.full((1, 2), 0.2), day=1, step_time=3e-3)
    return [a, b0, b1]


def test_hand_built_fixture():
    s = summarize(fixture_records(), base_mva=5.0)
    assert list(s.methods) == ["a", "b"]
    assert s["a"].violation_pct == pytest.approx(100 / 6)
    assert s["a"].mean_abs_q_kvar == pytest.approx(0.1 * 5000)
    assert s["a"].mean_step_time == pytest.approx(2e-3)
    assert s["b"].violation_pct == 0.0
    assert s["b"].mean_abs_q_kvar == pytest.approx(0.1 * 5000)
    assert s["b"].mean_step_time == pytest.approx(2e-3)
    assert s["b"].steps == 2
    np.testing.assert_allclose(s["b"].deviation_mean, [0.0, 0.01, -0.01], atol=1e-12)
    np.testing.assert_allclose(s["a"].deviation_var, [0.0, 0.0, 0.0025], atol=1e-12)


def test_empty_input_raises(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        summarize([])
    with pytest.raises(ValueError):
        report(None, [], tmp_path)


def test_report_files_are_reproducible(tmp_path):
    recs = fixture_records()
    recs.append(make_record("c", np.ones((1, 3))))
    s = summarize(recs)
    paths = report(s, recs, tmp_path / "one", bus_names=["head", "x", "y"])
    assert {p.name for p in paths} == {"summary.csv", "summary.txt", "voltages.csv", "deviation.csv"}
    rows = (tmp_path / "one" / "summary.csv").read_text().splitlines()
    assert rows[0] == "method,time_s,avg_q_kvar,violation_pct"
    assert len(rows) == 4
    assert all(len(r.split(",")) == 4 for r in rows)
    report(s, recs, tmp_path / "two", bus_names=["head", "x", "y"])
    for name in ("summary.csv", "summary.txt", "voltages.csv", "deviation.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    volt = (tmp_path / "one" / "voltages.csv").read_text().splitlines()
    assert volt[0] == "method,day,step,head,x,y"
    assert len(volt) == 1 + 2 + 1 + 1 + 1


def test_records_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    recs = fixture_records()
    for r in recs:
        r.v = r.v * (1 + rng.normal(0, 1e-3, r.v.shape))
        r.controller_time = rng.uniform(0, 1e-3, len(r))
        r.status[:] = rng.integers(-1, 3, len(r))
    save_records(recs, tmp_path)
    back = load_records(tmp_path)
    assert [(r.method, r.day) for r in back] == [(r.method, r.day) for r in recs]
    for r, b in zip(recs, back):
        for name in ("v", "action", "raw_action", "state", "reward", "controller_time", "status"):
            assert np.array_equal(getattr(r, name), getattr(b, name)), name
    s1, s2 = summarize(recs), summarize(back)
    for m in s1.methods:
        assert s1[m].violation_pct == s2[m].violation_pct
        assert s1[m].mean_abs_q_kvar == s2[m].mean_abs_q_kvar
        assert s1[m].mean_step_time == s2[m].mean_step_time


def test_load_records_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_records(tmp_path)
    (tmp_path / "index.json").write_text('{"schema": 99, "records": []}')
    with pytest.raises(ValueError, match="schema"):
        load_records(tmp_path)
