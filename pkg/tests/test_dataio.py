import numpy as np
import pytest

import emastate as es
from emastate.errors import EmaError


def _make_file(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- read/write --------------------------------------------------------------

def test_roundtrip_simulated_dataset(tmp_path):
    spec = es.ModelSpec(A=[[0.5, 0.1], [0.0, 0.6]], Sigma=np.eye(2),
                        Theta=0.3 * np.eye(2), G=[[1.0], [0.5]])
    sched = es.PingSchedule(kind="fixed", horizon=50.0, interval=1.0)
    trend = es.TrendSpec(kind="linear", coefficients=(0.05,))
    data = es.simulate_dataset(spec, sched, trends=[trend],
                               n_participants=10, rng_seed=31)
    data = es.inject_missingness(data, es.MissingnessSpec("MCAR", 0.2), 5)
    path = tmp_path / "d.csv"
    es.write_dataset(data, path)
    back = es.read_dataset(path)
    assert es.datasets_equal(data, back, atol=1e-9)


def test_na_cell_sets_mask(tmp_path):
    path = _make_file(tmp_path, "participant_id,t,y.mood\np1,0,1.5\np1,1,NA\n")
    data = es.read_dataset(path)
    p = data.participants[0]
    assert p.missing[1, 0] and not p.missing[0, 0]
    assert np.isnan(p.Y[1, 0])
    assert data.y_names == ["mood"]


def test_duplicate_timestamp_rejected(tmp_path):
    path = _make_file(tmp_path, "participant_id,t,y.m\np1,0,1\np1,0,2\n")
    with pytest.raises(EmaError) as exc:
        es.read_dataset(path)
    assert exc.value.code == "NON_MONOTONE_TIME"


def test_na_in_u_rejected(tmp_path):
    path = _make_file(tmp_path, "participant_id,t,y.m,u.x\np1,0,1,NA\n")
    with pytest.raises(EmaError) as exc:
        es.read_dataset(path)
    assert exc.value.code == "NA_IN_U"


def test_parse_error_carries_line_number(tmp_path):
    path = _make_file(tmp_path, "participant_id,t,y.m\np1,0,1\np1,oops,2\n")
    with pytest.raises(EmaError) as exc:
        es.read_dataset(path)
    assert exc.value.code == "PARSE_ERROR"
    assert ":3:" in exc.value.message


def test_unsorted_participants_rejected(tmp_path):
    path = _make_file(tmp_path,
                      "participant_id,t,y.m\np2,0,1\np1,0,1\n")
    with pytest.raises(EmaError) as exc:
        es.read_dataset(path)
    assert exc.value.code == "PARSE_ERROR"


def test_split_participant_block_rejected(tmp_path):
    path = _make_file(tmp_path,
                      "participant_id,t,y.m\np1,0,1\np2,0,1\np1,1,1\n")
    with pytest.raises(EmaError) as exc:
        es.read_dataset(path)
    assert exc.value.code == "PARSE_ERROR"


# --- night-gap augmentation --------------------------------------------------

def _two_day_dataset(delta=2.4, pings_per_day=5):
    t = np.concatenate([np.arange(pings_per_day) * delta,
                        24.0 + np.arange(pings_per_day) * delta])
    Y = np.arange(t.size, dtype=float).reshape(-1, 1)
    return es.EmaDataset(
        [es.Participant("p1", t, Y, np.zeros_like(Y, bool), np.zeros((t.size, 0)))],
        ["y1"], [])


def test_paper_night_counting_five_rows():
    # 5 pings over a 12h day leaves a 12h night; at the 2.4h day cadence that
    # is 5 missing slots
    data = _two_day_dataset()
    out = es.augment_night_gaps(data, day_window=(0.0, 12.0), target_interval=2.4)
    p = out.participants[0]
    assert p.n_pings == 15
    assert p.metadata["inserted_rows"] == [5, 6, 7, 8, 9]
    assert p.missing[5:10].all()
    # even spread continues the day grid exactly here
    assert np.allclose(np.diff(p.timestamps), 2.4)


def test_continuous_pinging_unchanged():
    t = np.arange(48) * 1.0
    Y = np.zeros((48, 1))
    data = es.EmaDataset(
        [es.Participant("p1", t, Y, np.zeros_like(Y, bool), np.zeros((48, 0)))],
        ["y1"], [])
    out = es.augment_night_gaps(data, day_window=(0.0, 24.0), target_interval=1.0)
    assert out.participants[0].n_pings == 48
    assert out.participants[0].metadata["inserted_rows"] == []


def test_inserted_count_matches_rounding_rule():
    # wake 8:00, sleep 22:00; randomize the day cadence and the clock time of
    # the last evening ping, then check the excess-gap rounding rule
    rng = np.random.default_rng(37)
    wake, sleep = 8.0, 22.0
    for _ in range(20):
        delta = float(rng.uniform(1.5, 3.5))
        last = sleep - float(rng.uniform(0.0, delta))
        day = np.arange(wake, last + 1e-9, delta)
        t = np.concatenate([day, [24.0 + wake]])
        Y = np.zeros((t.size, 1))
        data = es.EmaDataset(
            [es.Participant("p1", t, Y, np.zeros_like(Y, bool),
                            np.zeros((t.size, 0)))], ["y1"], [])
        out = es.augment_night_gaps(data, day_window=(wake, sleep),
                                    target_interval=delta)
        n_inserted = len(out.participants[0].metadata["inserted_rows"])
        night_gap = (24.0 + wake - day[-1]) - delta
        assert n_inserted == round(night_gap / delta)


def test_augmentation_never_alters_observed_values():
    data = _two_day_dataset()
    before = data.participants[0].Y.copy()
    out = es.augment_night_gaps(data, day_window=(0.0, 12.0), target_interval=2.4)
    p = out.participants[0]
    kept = ~p.missing[:, 0]
    assert np.array_equal(p.Y[kept], before)
    assert np.array_equal(data.participants[0].Y, before)


# --- time covariates ---------------------------------------------------------

def _daily_dataset(T=7, start_weekday=0):
    t = np.arange(T) * 24.0
    Y = np.zeros((T, 1))
    meta = {"start_weekday": start_weekday}
    return es.EmaDataset(
        [es.Participant("p1", t, Y, np.zeros_like(Y, bool),
                        np.zeros((T, 0)), metadata=meta)], ["y1"], [])


def test_weekend_dummy_monday_start():
    data = _daily_dataset()
    out = es.encode_time_covariates(data, [es.TimeCovariate("weekend_dummy")])
    assert out.u_names == ["weekend_dummy"]
    assert np.allclose(out.participants[0].U[:, 0], [0, 0, 0, 0, 0, 1, 1])


def test_linear_t_is_ping_index():
    data = _daily_dataset(T=5)
    out = es.encode_time_covariates(data, [es.TimeCovariate("linear_t")])
    assert np.allclose(out.participants[0].U[:, 0], [1, 2, 3, 4, 5])


def test_time_since_waking():
    t = np.array([14.0])
    Y = np.zeros((1, 1))
    data = es.EmaDataset(
        [es.Participant("p1", t, Y, np.zeros_like(Y, bool), np.zeros((1, 0)))],
        ["y1"], [])
    cov = es.TimeCovariate("time_since_waking", wake_times={"p1": 7.5})
    out = es.encode_time_covariates(data, [cov])
    assert out.participants[0].U[0, 0] == pytest.approx(6.5)


def test_time_since_waking_requires_wake_times():
    data = _daily_dataset()
    with pytest.raises(EmaError) as exc:
        es.encode_time_covariates(data, [es.TimeCovariate("time_since_waking")])
    assert exc.value.code == "MISSING_WAKE_TIMES"


def test_clock_time_wraps_by_day():
    t = np.array([3.0, 27.5])
    Y = np.zeros((2, 1))
    data = es.EmaDataset(
        [es.Participant("p1", t, Y, np.zeros_like(Y, bool), np.zeros((2, 0)))],
        ["y1"], [])
    out = es.encode_time_covariates(data, [es.TimeCovariate("clock_time")])
    assert np.allclose(out.participants[0].U[:, 0], [3.0, 3.5])


def test_reencoding_replaces_named_column():
    data = _daily_dataset()
    once = es.encode_time_covariates(data, [es.TimeCovariate("linear_t")])
    twice = es.encode_time_covariates(once, [es.TimeCovariate("linear_t")])
    assert twice.u_names == ["linear_t"]
    assert twice.participants[0].U.shape[1] == 1
    assert np.allclose(twice.participants[0].U, once.participants[0].U)
