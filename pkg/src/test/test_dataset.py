import numpy as np
import pytest

from banksim.dataset import (
    COLUMNS,
    CaptiveDataset,
    CaptiveRecord,
    HarmonicSway,
    HarmonicYaw,
    concat,
    load_csv,
    split,
    synthesize,
    write_csv,
)
from banksim.errors import DomainError, ParseError, SchemaError

HEADER = ",".join(COLUMNS)


def _row(t, y=0.5):
    return f"{t},0.0,{y},0.0,1.0,0.0,0.0,0.0,0.0,0.0,0.0,-12.6,0.0,0.0"


def test_csv_round_trip_is_exact(tmp_path, oracle_dataset):
    path = str(tmp_path / "captive.csv")
    write_csv(oracle_dataset, path)
    loaded = load_csv(path, oracle_dataset.vessel, oracle_dataset.canal)
    assert loaded.records == oracle_dataset.records
    assert loaded.test_labels == oracle_dataset.test_labels
    assert loaded.explicit_labels


def test_missing_column(tmp_path, vessel, canal):
    path = tmp_path / "bad.csv"
    path.write_text(HEADER.replace(",rdot", "") + "\n")
    with pytest.raises(SchemaError) as err:
        load_csv(str(path), vessel, canal)
    assert err.value.column == "rdot"
    assert "rdot" in str(err.value)


def test_unparseable_value_reports_line(tmp_path, vessel, canal):
    path = tmp_path / "bad.csv"
    rows = [HEADER, _row(0.0), _row(0.1).replace("-12.6", "oops")]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ParseError) as err:
        load_csv(str(path), vessel, canal)
    assert err.value.line == 3


def test_non_finite_value_rejected(tmp_path, vessel, canal):
    path = tmp_path / "bad.csv"
    path.write_text("\n".join([HEADER, _row(0.0).replace("-12.6", "nan")]) + "\n")
    with pytest.raises(ParseError):
        load_csv(str(path), vessel, canal)


def test_labels_inferred_from_time_resets(tmp_path, vessel, canal):
    path = tmp_path / "tests.csv"
    rows = [_row(t) for t in (0.0, 0.1, 0.2, 0.0, 0.1, 0.0)]
    path.write_text("\n".join([HEADER] + rows) + "\n")
    dataset = load_csv(str(path), vessel, canal)
    assert dataset.test_labels == ("A", "A", "A", "B", "B", "C")
    assert not dataset.explicit_labels


def test_record_outside_canal_rejected(tmp_path, vessel, canal):
    path = tmp_path / "outside.csv"
    path.write_text("\n".join([HEADER, _row(0.0), _row(0.1, y=3.6)]) + "\n")
    with pytest.raises(DomainError) as err:
        load_csv(str(path), vessel, canal)
    assert err.value.index == 1


def test_time_must_increase_within_a_test(vessel, canal):
    record = CaptiveRecord(0.0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        CaptiveDataset((record, record), ("A", "A"), vessel, canal)
    CaptiveDataset((record, record), ("A", "B"), vessel, canal)


def test_split_is_a_deterministic_partition(oracle_dataset):
    first = split(oracle_dataset, fraction=0.8, seed=3)
    again = split(oracle_dataset, fraction=0.8, seed=3)
    other = split(oracle_dataset, fraction=0.8, seed=4)
    n = len(oracle_dataset)
    assert np.array_equal(first.train, again.train)
    assert not np.array_equal(first.train, other.train)
    assert len(first.train) == round(0.8 * n)
    assert len(np.intersect1d(first.train, first.validation)) == 0
    pooled = np.concatenate([first.train, first.validation])
    assert np.array_equal(np.sort(pooled), np.arange(n))


def test_split_rounds_half_up(oracle_dataset):
    records = oracle_dataset.records[:5]
    small = CaptiveDataset(
        records, ("A",) * 5, oracle_dataset.vessel, oracle_dataset.canal
    )
    assert len(split(small, fraction=0.5, seed=0).train) == 3
    with pytest.raises(ValueError):
        split(small, fraction=1.0)


def test_stratified_split(oracle_dataset):
    parts = split(oracle_dataset, fraction=0.8, seed=1, per_test=True)
    labels = np.array(oracle_dataset.test_labels)
    for label in ("A", "B", "C"):
        in_test = np.flatnonzero(labels == label)
        assert len(np.intersect1d(parts.train, in_test)) == round(0.8 * len(in_test))


def test_harmonic_sway_amplitude(vessel, canal, truth):
    scenario = HarmonicSway(amplitude=0.8, period=25.0)
    dataset = synthesize(
        vessel, canal, truth, scenario, u0=1.0, duration=50.0, dt=0.1
    )
    y = dataset.column("y")
    assert np.max(y) == pytest.approx(0.8, rel=1e-3)
    assert np.min(y) == pytest.approx(-0.8, rel=1e-3)
    assert np.all(dataset.column("psi") == 0.0)
    assert len(dataset) == 500


def test_harmonic_yaw_track_follows_heading(vessel, canal, truth):
    dt = 0.01
    scenario = HarmonicYaw(amplitude=0.3, period=20.0)
    dataset = synthesize(
        vessel, canal, truth, scenario, u0=1.0, duration=20.0, dt=dt
    )
    x, y, psi = dataset.column("x"), dataset.column("y"), dataset.column("psi")
    # zero drift: the track is tangent to the heading
    assert np.allclose(np.gradient(y, dt)[1:-1], np.sin(psi)[1:-1], atol=1e-4)
    assert np.allclose(np.gradient(x, dt)[1:-1], np.cos(psi)[1:-1], atol=1e-4)
    assert np.all(dataset.column("v") == 0.0)


def test_synthesized_forces_match_truth(oracle_dataset, truth):
    u = oracle_dataset.column("u")
    assert np.allclose(oracle_dataset.column("X"), -truth.value("a_|u|u") * u * u)


def test_noise_is_seeded(vessel, canal, truth):
    scenario = HarmonicSway(amplitude=0.5, period=25.0)
    kwargs = dict(u0=1.0, duration=20.0, dt=0.1, noise_std=(0.1, 0.1, 0.1))
    a = synthesize(vessel, canal, truth, scenario, seed=5, **kwargs)
    b = synthesize(vessel, canal, truth, scenario, seed=5, **kwargs)
    clean = synthesize(vessel, canal, truth, scenario, u0=1.0, duration=20.0, dt=0.1)
    assert a.records == b.records
    assert not np.array_equal(a.column("Y"), clean.column("Y"))
    assert np.array_equal(a.column("y"), clean.column("y"))


def test_synthesize_rejects_tracks_into_the_bank(vessel, canal, truth):
    with pytest.raises(DomainError):
        into_bank = HarmonicSway(amplitude=0.5, period=25.0, y_offset=3.0)
        synthesize(vessel, canal, truth, into_bank, 1.0, 30.0, 0.1)
    with pytest.raises(ValueError):
        centred = HarmonicSway(amplitude=0.5, period=25.0)
        synthesize(vessel, canal, truth, centred, 1.0, 30.0, 0.0)


def test_concat_keeps_labels(oracle_dataset, vessel, canal):
    assert oracle_dataset.labels() == ["A", "B", "C"]
    assert len(oracle_dataset) == 1200
    with pytest.raises(ValueError):
        concat([])
