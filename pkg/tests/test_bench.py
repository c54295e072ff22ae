from __future__ import annotations

import math

import pytest

from constellation_match.bench import BenchReport, Cell, run_bench
from constellation_match.scenario import ScenarioSpec

ZERO = dict(position_noise_std_m=0.0, embedding_noise_std=0.0)


@pytest.fixture(scope="module")
def small_report():
    return run_bench(ScenarioSpec(trials=3, embedding_dim=32, seed=1))


class TestCell:
    def test_timeout_blanks_cell(self):
        assert Cell([1.0], timeouts=1).accuracy is None
        assert Cell().accuracy is None
        assert Cell([1.0, 0.5]).accuracy == 0.75


class TestBench:
    def test_zero_noise_astar_perfect(self):
        rep = run_bench(ScenarioSpec(trials=3, **ZERO), solvers=("astar",))
        for key, cell in rep.cells.items():
            assert cell.accuracy == 1.0, key

    @pytest.mark.xfail(strict=True, reason="spectral and RRWM relaxations favour high-degree parent "
                                           "regions over exact self-matches on some zero-noise scenes")
    def test_zero_noise_relaxations_perfect(self):
        rep = run_bench(ScenarioSpec(trials=1, **ZERO), solvers=("rrwm", "spectral"))
        for key, cell in rep.cells.items():
            assert cell.accuracy == 1.0, key

    def test_accuracies_in_range(self, small_report):
        for cell in small_report.cells.values():
            assert len(cell.accuracies) == 3
            assert 0.0 <= cell.accuracy <= 1.0

    def test_aggregate_is_row_mean(self, small_report):
        sizes = small_report.spec.subgraph_sizes
        for s in small_report.solvers:
            for a in small_report.affinities:
                cells = [small_report.accuracy(s, a, z) for z in sizes]
                assert abs(small_report.aggregate(s, a) - sum(cells) / len(cells)) <= 1e-12

    def test_table_layout(self, small_report):
        text = small_report.table()
        lines = text.splitlines()
        assert lines[0].split() == ["Solver", "Affinity", "2", "3", "4", "5", "Avg.", "Solve", "ms"]
        assert sum(1 for ln in lines if ln.startswith(("A*", "RRWM", "Spectral"))) == 3
        assert "Unc. Cos" in text and "Bhatt." in text and "Mah." in text
        assert "Solve ms" not in small_report.table(include_timings=False)

    def test_timeout_rendered_as_dashes(self, small_report):
        rep = BenchReport(small_report.spec, ("astar",), ("weighted_cosine",),
                          {("astar", "weighted_cosine", z): Cell(timeouts=1) for z in (2, 3, 4, 5)})
        row = rep.table(include_timings=False).splitlines()[2]
        assert row.split()[-5:] == ["--"] * 5
        assert rep.to_dict()["rows"][0]["aggregate"] is None

    def test_dict_schema(self, small_report):
        d = small_report.to_dict()
        assert d["schema"] == "constellation-match/1"
        assert len(d["rows"]) == 9
        assert "mean_solve_s" in d["rows"][0]["cells"]["2"]
        assert "mean_solve_s" not in small_report.to_dict(include_timings=False)["rows"][0]["cells"]["2"]

    def test_deterministic(self, small_report):
        again = run_bench(ScenarioSpec(trials=3, embedding_dim=32, seed=1))
        assert again.to_dict(False) == small_report.to_dict(False)

    def test_parallel_matches_serial(self):
        spec = ScenarioSpec(trials=4, embedding_dim=16, seed=2)
        serial = run_bench(spec, solvers=("rrwm", "spectral"))
        parallel = run_bench(spec, solvers=("rrwm", "spectral"), jobs=2)
        assert parallel.to_dict(False) == serial.to_dict(False)

    def test_weighted_cosine_beats_mahalanobis_for_rrwm(self):
        wins = 0
        draws = 10
        for seed in range(draws):
            rep = run_bench(ScenarioSpec(trials=10, seed=100 + seed), solvers=("rrwm",),
                            affinities=("weighted_cosine", "mahalanobis"))
            wins += rep.aggregate("rrwm", "weighted_cosine") >= rep.aggregate("rrwm", "mahalanobis")
        assert wins >= math.ceil(0.8 * draws)
