from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vader import estimator
from vader.estimator import ChainProfile, ProfileError, fit_misc, load_profiles, project, throughput_mbps

# published per-file latencies for 200-file sessions
TABLE = {
    "Bitcoin": (5.88, 1637.04),
    "Ethereum": (0.57, 44.22),
    "Litecoin": (1.92, 449.95),
    "Siacoin": (6.42, 1800.48),
    "Monero": (1.64, 365.17),
    "Zcash": (1.92, 450.48),
    "Peercoin": (5.26, 1453.63),
    "Dogecoin": (1.05, 188.04),
}


def test_misc_constants_from_reference_row():
    misc_v, misc_b = fit_misc()
    assert misc_v == pytest.approx(0.57 - 2 * 14.58 / 200)
    assert misc_b == pytest.approx(44.22 - 3 * 14.58)
    assert misc_v == pytest.approx(0.4242)
    assert misc_b == pytest.approx(0.48)


@pytest.mark.parametrize("profile", estimator.BUILTIN_PROFILES, ids=lambda p: p.name)
def test_table_rows(profile):
    v, b = project(profile, 200)
    want_v, want_b = TABLE[profile.name]
    assert v == pytest.approx(want_v, abs=0.01)
    assert b == pytest.approx(want_b, abs=0.5)


def test_bitcoin_example():
    v, b = project(ChainProfile("Bitcoin", 545.52), 200, 0.4242, 0.48)
    assert round(v, 2) == 5.88 and round(b, 2) == 1637.04


def test_zero_block_time_limit():
    v, b = project(ChainProfile("fast", 1e-12), 200)
    assert v == pytest.approx(estimator.MISC_VADER_S)
    assert b == pytest.approx(estimator.MISC_BME_S)


def test_single_file_session():
    v, _ = project(ChainProfile("x", 10.0), 1)
    assert v == pytest.approx(20.0 + estimator.MISC_VADER_S)


def test_bad_inputs():
    with pytest.raises(ValueError):
        ChainProfile("x", 0)
    with pytest.raises(ValueError):
        project(ChainProfile("x", 1.0), 0)
    with pytest.raises(ValueError):
        throughput_mbps(1, 0)


def test_throughput():
    assert throughput_mbps(20_000_000, 5.88) == pytest.approx(27.21, rel=0.01)
    assert throughput_mbps(20_000_000, 0.57) == pytest.approx(280.7, rel=0.01)
    assert throughput_mbps(0, 1.0) == 0


@given(st.floats(0.01, 1000), st.integers(1, 999))
def test_more_files_never_slower(bg, n):
    p = ChainProfile("p", bg)
    assert project(p, n + 1)[0] < project(p, n)[0]
    assert project(p, n + 1)[1] == project(p, n)[1]


def test_load_profiles_csv_and_json(tmp_path):
    csv_path = tmp_path / "p.csv"
    csv_path.write_text("name,block_gen_time_s\nA,10\nB,2.5\n")
    assert [p.block_gen_time_s for p in load_profiles(csv_path)] == [10.0, 2.5]
    json_path = tmp_path / "p.json"
    json_path.write_text('[{"name": "A", "block_gen_time_s": 3}]')
    assert load_profiles(json_path)[0].name == "A"
    obj_path = tmp_path / "o.json"
    obj_path.write_text('{"A": 1, "B": 2}')
    assert len(load_profiles(obj_path)) == 2


@pytest.mark.parametrize("text", ["", "name,block_gen_time_s\n", "A,-1\n", "A,abc\n", "[{\"name\": 1}]"])
def test_load_profiles_errors(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ProfileError):
        load_profiles(path)


def test_table_csv_shape():
    text = estimator.table_csv(estimator.table())
    lines = text.splitlines()
    assert lines[0].startswith("chain,block_gen_time_s,vader_s,bme_s")
    assert len(lines) == 9
