import numpy as np
import pytest

from flowuq import DataError, ParseError
from flowuq import dataio
from flowuq.scenarios import armington_world, mirror_world


def test_flows_csv_roundtrip(tmp_path):
    path = tmp_path / "flows.csv"
    path.write_text(
        "origin,destination,flow\n"
        "B,A,2.5\n"
        "A,B,1.5\n"
        "A,A,4.0\n"
    )
    fm = dataio.read_flows_csv(path)
    assert fm.labels == ("A", "B")
    assert fm.values[0, 1] == 1.5
    assert fm.values[1, 0] == 2.5
    assert fm.values[1, 1] == 0.0  # missing dyad is an explicit zero


def test_flows_csv_errors(tmp_path):
    path = tmp_path / "flows.csv"
    path.write_text("origin,destination,flow\nA,B,oops\n")
    with pytest.raises(ParseError) as info:
        dataio.read_flows_csv(path)
    assert info.value.row == 2
    path.write_text("origin,dest,flow\nA,B,1.0\n")
    with pytest.raises(ParseError):
        dataio.read_flows_csv(path)
    path.write_text("origin,destination,flow\nA,B,1.0\nA,B,2.0\n")
    with pytest.raises(ParseError):
        dataio.read_flows_csv(path)
    with pytest.raises(DataError):
        dataio.read_flows_csv(tmp_path / "nope.csv")


def test_distances_fallback_to_reverse(tmp_path):
    path = tmp_path / "dist.csv"
    path.write_text("origin,destination,distance\nA,B,7.0\n")
    dm = dataio.read_distances_csv(path, ["A", "B"])
    assert dm.values[0, 1] == 7.0
    assert dm.values[1, 0] == 7.0  # reverse direction fallback
    path.write_text("origin,destination,distance\nA,B,7.0\n")
    with pytest.raises(DataError):
        dataio.read_distances_csv(path, ["A", "B", "C"])


def test_cf_spec_defaults_to_one(tmp_path):
    path = tmp_path / "spec.csv"
    path.write_text("origin,destination,tau_prop\nA,B,1.1\n")
    spec = dataio.read_cf_spec_csv(path, ["A", "B"])
    assert spec.tau_prop[0, 1] == 1.1
    assert spec.tau_prop[1, 0] == 1.0
    assert spec.tau_prop[0, 0] == 1.0


def test_params_json_roundtrip(tmp_path):
    scen = mirror_world(n=5, t=4, seed=8)
    from flowuq import calibrate_mirror

    params = calibrate_mirror(scen.panel, scen.distances)
    path = tmp_path / "params.json"
    dataio.write_params_json(path, params)
    back = dataio.read_params_json(path)
    assert back.labels == params.labels
    assert back.periods == params.periods
    np.testing.assert_allclose(back.p, params.p)
    np.testing.assert_allclose(back.sigma2, params.sigma2)
    np.testing.assert_allclose(back.s2_shrunk, params.s2_shrunk)
    np.testing.assert_allclose(back.mu, params.mu)
    assert np.array_equal(back.mu_defined, params.mu_defined)


def test_params_json_baseline_roundtrip(tmp_path):
    aw = armington_world(n=4, seed=2)
    path = tmp_path / "p.json"
    dataio.write_params_json(path, aw.params)
    back = dataio.read_params_json(path)
    assert not back.has_periods
    np.testing.assert_allclose(
        back.mu[~np.eye(4, dtype=bool)], aw.params.mu[~np.eye(4, dtype=bool)]
    )
    assert np.all(np.isnan(np.diag(back.mu)))


def test_draws_csv_roundtrip(tmp_path):
    from flowuq import DrawSet

    ds = DrawSet(
        draws=np.random.default_rng(0).normal(size=(50, 3)),
        b=50,
        seed=1,
        mode="ee+me",
        labels=("x", "y", "z"),
    )
    path = tmp_path / "draws.csv"
    dataio.write_draws_csv(path, ds)
    labels, arr = dataio.read_draws_csv(path)
    assert labels == ("x", "y", "z")
    np.testing.assert_array_equal(arr, ds.draws)


def test_mirror_csv_roundtrip(tmp_path):
    scen = mirror_world(n=4, t=3, seed=5)
    path = tmp_path / "mirror.csv"
    dataio.write_mirror_csv(
        path, scen.labels, scen.periods, scen.panel.report1, scen.panel.report2
    )
    from flowuq import ingest_mirror_csv

    panel = ingest_mirror_csv(path)
    assert panel.labels == scen.labels
    assert panel.periods == scen.periods
    np.testing.assert_allclose(panel.report1, scen.panel.report1)
    np.testing.assert_allclose(panel.report2, scen.panel.report2)
