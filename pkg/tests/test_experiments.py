import csv
import io
import json
import math

import pytest

from wirelesspow.experiments import (
    COLUMNS,
    ExperimentConfig,
    attack_cdf,
    gap_trajectories,
    run_experiment,
    success_vs_depth,
    tradeoff_surface,
)
from wirelesspow.channel import LinkParams, q_c
from wirelesspow.race import catch_up_probability


def cfg(**kw):
    kw.setdefault("trials", 300)
    kw.setdefault("horizon", 400)
    return ExperimentConfig(**kw)


@pytest.fixture(scope="module")
def tradeoff_data():
    return tradeoff_surface(
        cfg(experiment="tradeoff_surface", q_w_grid=(0.4, 0.55, 0.6), sinr_grid=(45.0, 60.0), attempts_grid=(3, 6))
    )


@pytest.fixture(scope="module")
def cdf_data():
    return attack_cdf(cfg(experiment="attack_cdf", trials=500, horizon=300))


@pytest.fixture(scope="module")
def depth_data():
    return success_vs_depth(cfg(experiment="success_vs_depth", trials=2000, horizon=1000))


class TestTradeoff:
    def test_columns(self, tradeoff_data):
        assert tradeoff_data.columns == COLUMNS["tradeoff_surface"]
        assert len(tradeoff_data.rows) == 3 * 2 * 2

    @pytest.mark.parametrize(
        "q_w, sinr, attempts, label",
        [(0.55, 60.0, 3, "A"), (0.4, 45.0, 3, "A"), (0.4, 60.0, 3, "B"), (0.4, 45.0, 6, "B"), (0.6, 60.0, 3, "A")],
    )
    def test_labelled_points(self, tradeoff_data, q_w, sinr, attempts, label):
        (row,) = tradeoff_data.select(q_w=q_w, sinr_db=sinr, max_attempts=attempts)
        assert row["region"] == label
        if label == "A":
            assert row["p_theory"] == 1.0 and row["Q"] >= 1
        else:
            assert row["p_theory"] == pytest.approx(row["Q"] ** 6)

    def test_forced_boundary(self):
        data = tradeoff_surface(cfg(experiment="tradeoff_surface", q_w_grid=(0.5,), sinr_grid=(45.0,), q_c=1.0))
        (row,) = data.select()
        assert row["Q"] == 1.0 and row["p_theory"] == 1.0 and row["region"] == "A"

    def test_q_c_echo_precision(self, tradeoff_data):
        text = tradeoff_data.to_csv()
        for rec in csv.DictReader(io.StringIO(text)):
            digits = rec["q_c"].lower().split("e")[0].replace(".", "").replace("-", "").lstrip("0")
            assert len(digits) >= 10 or float(rec["q_c"]) in (0.0, 1.0)

    def test_empty_grid(self):
        with pytest.raises(ValueError, match="empty"):
            tradeoff_surface(cfg(experiment="tradeoff_surface", q_w_grid=()))


class TestGap:
    def test_certain_attacker_series(self):
        data = gap_trajectories(cfg(experiment="gap_trajectories", points=((1.0, 60.0),)))
        assert data.column("mean_gap") == [6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]

    def test_paper_points(self):
        data = gap_trajectories(cfg(experiment="gap_trajectories", trials=500, horizon=1000))
        fast = [r["mean_gap"] for r in data.select(q_w=0.6, sinr_db=60.0)]
        jam = [r["mean_gap"] for r in data.select(q_w=0.4, sinr_db=45.0)]
        for series in (fast, jam):
            assert series[0] == 6.0 and series[-1] == 0.0
        slow = data.select(q_w=0.4, sinr_db=60.0)
        active = [r["mean_gap_active"] for r in slow]
        assert len(slow) == 1001
        assert active[-1] > active[0] == 6.0
        assert active[-1] > active[len(active) // 2] > active[100]

    def test_empty_points(self):
        with pytest.raises(ValueError, match="empty"):
            gap_trajectories(cfg(experiment="gap_trajectories", points=()))


class TestCdf:
    def test_theory_parity(self, cdf_data):
        for q_w, sinr in ((0.6, 60.0), (0.4, 45.0), (0.4, 60.0)):
            theory = [r["cdf_theory"] for r in cdf_data.select(q_w=q_w, sinr_db=sinr)]
            emp = [r["cdf_empirical"] for r in cdf_data.select(q_w=q_w, sinr_db=sinr)]
            for k in range(150):
                assert theory[2 * k + 1] == theory[2 * k]
                assert emp[2 * k + 1] == emp[2 * k]

    def test_round_six_value(self, cdf_data):
        (row,) = cdf_data.select(q_w=0.6, sinr_db=60.0, round=6)
        assert row["cdf_theory"] == pytest.approx(0.04667, abs=1e-5)

    def test_larger_q_is_faster(self, cdf_data):
        fast = [r["cdf_theory"] for r in cdf_data.select(q_w=0.4, sinr_db=45.0)]
        slow = [r["cdf_theory"] for r in cdf_data.select(q_w=0.6, sinr_db=60.0)]
        slowest = [r["cdf_theory"] for r in cdf_data.select(q_w=0.4, sinr_db=60.0)]
        assert all(a >= b >= c for a, b, c in zip(fast, slow, slowest))
        fast_e = [r["cdf_empirical"] for r in cdf_data.select(q_w=0.4, sinr_db=45.0)]
        slow_e = [r["cdf_empirical"] for r in cdf_data.select(q_w=0.6, sinr_db=60.0)]
        # common random numbers make the empirical ordering hold pointwise too
        assert all(a >= b for a, b in zip(fast_e, slow_e))

    def test_theory_independent_of_trials(self):
        a = attack_cdf(cfg(experiment="attack_cdf", trials=10, horizon=50, points=((0.5, 50.0),)))
        b = attack_cdf(cfg(experiment="attack_cdf", trials=200, horizon=50, master_seed=3, points=((0.5, 50.0),)))
        assert a.column("cdf_theory") == b.column("cdf_theory")
        assert a.column("cdf_empirical") != b.column("cdf_empirical")


class TestDepth:
    def test_jammed_point_always_wins(self, depth_data):
        assert all(r["p_empirical"] >= 0.99 for r in depth_data.select(q_w=0.4, sinr_db=45.0))

    def test_geometric_decay(self, depth_data):
        theory = [r["p_theory"] for r in depth_data.select(q_w=0.4, sinr_db=60.0)]
        ratios = [b / a for a, b in zip(theory, theory[1:])]
        assert all(r == pytest.approx(0.6667, abs=1e-4) for r in ratios)

    def test_smaller_q_drops_faster(self, depth_data):
        p50 = [r["p_theory"] for r in depth_data.select(q_w=0.4, sinr_db=50.0)]
        p60 = [r["p_theory"] for r in depth_data.select(q_w=0.4, sinr_db=60.0)]
        assert all(a > b for a, b in zip(p50, p60))

    def test_theory_matches_closed_form(self, depth_data):
        for r in depth_data.select():
            assert r["p_theory"] == catch_up_probability(r["q_w"], data_q_c(r), r["z"])

    def test_simulation_tracks_theory(self, depth_data):
        for r in depth_data.select():
            p = r["p_theory"]
            assert abs(r["p_empirical"] - p) <= max(0.01, 4 * math.sqrt(p * (1 - p) / 2000))


def data_q_c(row):
    return q_c(LinkParams(sinr_db=row["sinr_db"]))


class TestOutput:
    def test_deterministic_bytes(self, tmp_path):
        config = cfg(experiment="success_vs_depth", trials=200, z_range=(1, 2, 3))
        a = run_experiment(config).to_csv()
        b = run_experiment(config).to_csv()
        assert a == b

    def test_write_files(self, tmp_path):
        data = run_experiment(cfg(experiment="attack_cdf", trials=20, horizon=30, points=((0.6, 60.0),)))
        csv_path, json_path = data.write(str(tmp_path))
        assert sorted(p.name for p in tmp_path.iterdir()) == ["cdf.csv", "cdf.json"]
        header = open(csv_path).readline().strip().split(",")
        assert tuple(header) == COLUMNS["attack_cdf"]
        side = json.load(open(json_path))
        assert side["config"]["experiment"] == "attack_cdf"
        assert side["master_seed"] == data.provenance["master_seed"]
        assert "timestamp" in side and "version" in side

    def test_partial_files_removed(self, tmp_path, monkeypatch):
        data = run_experiment(cfg(experiment="success_vs_depth", trials=5, z_range=(1,), points=((0.5, 50.0),)))
        import wirelesspow.experiments as ex

        def boom(*a, **k):
            raise TypeError("sidecar failure")

        monkeypatch.setattr(ex, "_json_default", boom)
        data.provenance["bad"] = object()
        with pytest.raises(TypeError):
            data.write(str(tmp_path))
        assert list(tmp_path.iterdir()) == []

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="heatmap")
        with pytest.raises(ValueError):
            ExperimentConfig(points=((1.5, 60.0),))
