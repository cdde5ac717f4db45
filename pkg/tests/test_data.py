import numpy as np
import pytest

from flowcast import data
from flowcast.errors import DataQualityError


def write_csv(path, rows, header="timestamp,flow"):
    path.write_text("\n".join([header] + rows) + "\n")


def test_load_well_formed(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,10",
                  "2017-01-01T00:15:00,12",
                  "2017-01-01T00:30:00,11"])
    series = data.load_series(p)
    assert len(series) == 3
    assert not series.missing_mask.any()
    assert series.values.tolist() == [10.0, 12.0, 11.0]
    assert series.sensor_id == "s"


def test_load_densifies_gaps(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,10",
                  "2017-01-01T00:30:00,11"])
    series = data.load_series(p)
    assert len(series) == 3
    assert series.missing_mask.tolist() == [False, True, False]
    assert series.missing_fraction == pytest.approx(1 / 3)


def test_load_year_of_slots(tmp_path):
    # one non-leap year of 15-minute slots
    p = tmp_path / "year.csv"
    rows = [f"{1483228800 + 900 * i},{(i % 7) + 1}" for i in range(35040)]
    write_csv(p, rows)
    series = data.load_series(p)
    assert len(series) == 35040


def test_load_unsorted_rows_are_sorted(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:15:00,2", "2017-01-01T00:00:00,1"])
    series = data.load_series(p)
    assert series.values.tolist() == [1.0, 2.0]


def test_load_duplicate_timestamp_errors(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,1", "2017-01-01T00:00:00,2"])
    with pytest.raises(DataQualityError, match="duplicate"):
        data.load_series(p)


def test_load_unparseable_row_reports_line(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,1", "not-a-date,2"])
    with pytest.raises(DataQualityError, match=r":3:"):
        data.load_series(p)


def test_load_bad_count_errors(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,abc"])
    with pytest.raises(DataQualityError, match="unparseable count"):
        data.load_series(p)


def test_load_off_grid_spacing_errors(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,1", "2017-01-01T00:07:00,2"])
    with pytest.raises(DataQualityError, match="not aligned"):
        data.load_series(p)


def test_load_epoch_timestamps(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["1483228800,5", "1483229700,6"])
    series = data.load_series(p)
    assert len(series) == 2
    assert series.values.tolist() == [5.0, 6.0]


def test_load_custom_schema(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("fecha;intensidad;extra\n2017-01-01T00:00:00;3;x\n")
    schema = data.ColumnSchema(timestamp="fecha", flow="intensidad", delimiter=";")
    series = data.load_series(p, schema)
    assert series.values.tolist() == [3.0]


def make_series(values, mask, sensor="t"):
    return data.TimeSeries(values=np.asarray(values, dtype=float),
                           missing_mask=np.asarray(mask, dtype=bool),
                           start=__import__("datetime").datetime(2017, 1, 1),
                           sensor_id=sensor)


def test_impute_midpoint():
    s = make_series([10, np.nan, 20], [False, True, False])
    out = data.impute(s, max_missing_fraction=1.0)
    assert out.values.tolist() == [10.0, 15.0, 20.0]
    assert not out.missing_mask.any()


def test_impute_leading_edge_hold():
    s = make_series([np.nan, 5, 7], [True, False, False])
    out = data.impute(s, max_missing_fraction=1.0)
    assert out.values.tolist() == [5.0, 5.0, 7.0]


def test_impute_interior_gap_linear_oracle():
    # independent oracle: straight line through the gap endpoints
    s = make_series([1, np.nan, np.nan, 4], [False, True, True, False])
    out = data.impute(s, max_missing_fraction=1.0)
    expected = np.interp(np.arange(4), [0, 3], [1.0, 4.0])
    np.testing.assert_allclose(out.values, expected)
    assert out.values.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_impute_trailing_edge_hold():
    s = make_series([3, 9, np.nan], [False, False, True])
    out = data.impute(s, max_missing_fraction=1.0)
    assert out.values.tolist() == [3.0, 9.0, 9.0]


def test_impute_idempotent_and_preserving():
    rng = np.random.default_rng(3)
    values = rng.uniform(0, 100, 200)
    mask = rng.random(200) < 0.2
    mask[0] = mask[-1] = False
    masked = values.copy()
    masked[mask] = np.nan
    s = make_series(masked, mask)
    once = data.impute(s, max_missing_fraction=0.5)
    twice = data.impute(once, max_missing_fraction=0.5)
    np.testing.assert_array_equal(once.values, twice.values)
    np.testing.assert_array_equal(once.values[~mask], values[~mask])


def test_impute_threshold_names_sensor():
    s = make_series([1, np.nan, np.nan, np.nan], [False, True, True, True],
                    sensor="atr042")
    with pytest.raises(DataQualityError, match="atr042"):
        data.impute(s, max_missing_fraction=0.03)


def test_impute_all_masked_errors():
    s = make_series([np.nan, np.nan], [True, True])
    with pytest.raises(DataQualityError, match="missing"):
        data.impute(s, max_missing_fraction=1.0)


def test_negative_values_rejected():
    with pytest.raises(ValueError, match=">= 0"):
        make_series([1, -2], [False, False])


def test_cache_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    values = rng.uniform(0, 500, 64)
    values[5] = 0.1  # classic repr stress value
    mask = np.zeros(64, dtype=bool)
    mask[10] = True
    values_masked = values.copy()
    values_masked[10] = np.nan
    s = make_series(values_masked, mask, sensor="rt")
    path = tmp_path / "rt.series.txt"
    data.save_cache(s, path, source_hash="abc123", meta="flowcast test")
    back = data.load_cache(path)
    assert back.sensor_id == "rt"
    assert back.start == s.start
    assert back.missing_mask.tolist() == mask.tolist()
    unmasked = ~mask
    assert back.values[unmasked].tolist() == values[unmasked].tolist()
    assert data.cache_source_hash(path) == "abc123"


def test_load_then_cache_round_trip(tmp_path):
    p = tmp_path / "s.csv"
    write_csv(p, ["2017-01-01T00:00:00,10.125",
                  "2017-01-01T00:15:00,0.1",
                  "2017-01-01T00:45:00,7"])
    series = data.load_series(p)
    cache = tmp_path / "s.series.txt"
    data.save_cache(series, cache)
    back = data.load_cache(cache)
    keep = ~series.missing_mask
    assert back.values[keep].tolist() == series.values[keep].tolist()
    assert back.missing_mask.tolist() == series.missing_mask.tolist()
