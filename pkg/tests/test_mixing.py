import math

import numpy as np
import pytest

from socsim.errors import InvalidInputError
from socsim.mixing import (
    MixProblem,
    OpinionMatrix,
    PopulationMix,
    allocate_population,
    average_target,
    mixture_objective,
    project_to_simplex,
    solve_mix,
)


def random_matrix(rng, qids, k=2):
    rows = rng.dirichlet(np.ones(k), size=len(qids))
    return OpinionMatrix(question_ids=tuple(qids), values=rows)


def frobenius(target, models, weights):
    stack = np.stack([m.values for m in models])
    blend = np.tensordot(weights, stack, axes=1)
    return float(np.linalg.norm(target.values - blend))


class TestOpinionMatrix:
    def test_row_sum_validation(self):
        with pytest.raises(InvalidInputError):
            OpinionMatrix(question_ids=("q1",), values=np.array([[0.6, 0.6]])).validate()

    def test_negative_entry_rejected(self):
        with pytest.raises(InvalidInputError):
            OpinionMatrix(question_ids=("q1",), values=np.array([[-0.1, 1.1]])).validate()

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        m = random_matrix(rng, ["q1", "q2", "q3"])
        path = tmp_path / "m.csv"
        m.to_csv(path)
        back = OpinionMatrix.from_csv(path)
        assert back.question_ids == m.question_ids
        assert np.array_equal(back.values, m.values)


class TestAverageTarget:
    def test_plain_argmax(self):
        m = OpinionMatrix(question_ids=("q1",), values=np.array([[0.3, 0.7]]))
        assert average_target(m).values.tolist() == [[0.0, 1.0]]

    def test_tie_breaks_low_column(self):
        m = OpinionMatrix(question_ids=("q1",), values=np.array([[0.5, 0.5]]))
        assert average_target(m).values.tolist() == [[1.0, 0.0]]

    def test_three_options(self):
        m = OpinionMatrix(question_ids=("q1",), values=np.array([[0.2, 0.5, 0.3]]))
        assert average_target(m).values.tolist() == [[0.0, 1.0, 0.0]]


class TestSimplexProjection:
    def test_already_on_simplex(self):
        w = np.array([0.2, 0.3, 0.5])
        assert np.allclose(project_to_simplex(w), w, atol=1e-12)

    def test_kkt_structure(self):
        # projection must have the water-filling form max(x - tau, 0)
        rng = np.random.default_rng(2)
        for _ in range(300):
            x = rng.normal(0, 2, int(rng.integers(1, 9)))
            w = project_to_simplex(x)
            assert np.all(w >= 0)
            assert math.isclose(w.sum(), 1.0, abs_tol=1e-9)
            active = w > 0
            taus = x[active] - w[active]
            assert np.ptp(taus) < 1e-9 if active.any() else True
            if (~active).any() and active.any():
                assert x[~active].max() <= taus.mean() + 1e-9

    def test_projection_is_nearest_point(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.normal(0, 1.5, 4)
            w = project_to_simplex(x)
            for _ in range(50):
                other = rng.dirichlet(np.ones(4))
                assert np.linalg.norm(x - w) <= np.linalg.norm(x - other) + 1e-9


class TestSolveMix:
    def test_target_in_basis(self):
        rng = np.random.default_rng(4)
        qids = [f"q{i}" for i in range(6)]
        h = random_matrix(rng, qids)
        problem = MixProblem(target=h, models={"only": h}, variant="distribution")
        result = solve_mix(problem)
        assert result.mix.weights["only"] == pytest.approx(1.0, abs=1e-9)
        assert result.objective == pytest.approx(0.0, abs=1e-9)

    def test_exact_midpoint_recovery_vs_grid(self):
        rng = np.random.default_rng(5)
        qids = [f"q{i}" for i in range(8)]
        m1, m2 = random_matrix(rng, qids), random_matrix(rng, qids)
        target = OpinionMatrix(question_ids=tuple(qids), values=0.5 * m1.values + 0.5 * m2.values)
        problem = MixProblem(target=target, models={"m1": m1, "m2": m2}, variant="distribution")
        result = solve_mix(problem)
        assert result.objective == pytest.approx(0.0, abs=1e-7)
        grid_best = min(
            frobenius(target, [m1, m2], np.array([w, 1 - w]))
            for w in np.linspace(0, 1, 101)
        )
        assert result.objective <= grid_best + 1e-6

    def test_beats_dirichlet_cloud_and_vertices(self):
        rng = np.random.default_rng(6)
        qids = [f"q{i}" for i in range(12)]
        names = [f"m{i}" for i in range(5)]
        models = {n: random_matrix(rng, qids) for n in names}
        target = random_matrix(rng, qids)
        problem = MixProblem(target=target, models=models, variant="distribution")
        result = solve_mix(problem)
        ordered = [models[n] for n in sorted(models)]
        cloud = rng.dirichlet(np.ones(len(names)), size=10_000)
        cloud_best = min(frobenius(target, ordered, w) for w in cloud)
        assert result.objective <= cloud_best + 1e-4
        for i in range(len(names)):
            vertex = np.zeros(len(names))
            vertex[i] = 1.0
            assert result.objective <= frobenius(target, ordered, vertex) + 1e-9

    def test_average_variant_uses_one_hot_target(self):
        rng = np.random.default_rng(7)
        qids = [f"q{i}" for i in range(5)]
        models = {f"m{i}": random_matrix(rng, qids) for i in range(3)}
        target = random_matrix(rng, qids)
        prob_avg = MixProblem(target=target, models=models, variant="average")
        res_avg = solve_mix(prob_avg)
        explicit = MixProblem(target=average_target(target), models=models, variant="distribution")
        res_explicit = solve_mix(explicit)
        assert res_avg.objective == pytest.approx(res_explicit.objective, abs=1e-9)

    def test_objective_monotone_history(self):
        rng = np.random.default_rng(8)
        qids = [f"q{i}" for i in range(10)]
        models = {f"m{i}": random_matrix(rng, qids) for i in range(4)}
        problem = MixProblem(target=random_matrix(rng, qids), models=models, variant="distribution")
        result = solve_mix(problem)
        assert all(b <= a + 1e-12 for a, b in zip(result.history, result.history[1:]))
        uniform = PopulationMix(weights={n: 1 / 4 for n in models})
        assert result.objective <= mixture_objective(problem, uniform) + 1e-9

    def test_simplex_feasibility(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            qids = [f"q{i}" for i in range(int(rng.integers(3, 15)))]
            models = {f"m{i}": random_matrix(rng, qids) for i in range(int(rng.integers(1, 7)))}
            result = solve_mix(MixProblem(target=random_matrix(rng, qids), models=models,
                                          variant="distribution"))
            w = np.array([result.mix.weights[n] for n in sorted(result.mix.weights)])
            assert np.all(w >= -1e-9)
            assert math.isclose(w.sum(), 1.0, abs_tol=1e-9)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(10)
        a = random_matrix(rng, ["q1", "q2"])
        b = random_matrix(rng, ["q1"])
        with pytest.raises(InvalidInputError):
            MixProblem(target=a, models={"b": b}, variant="distribution").validate()


class TestAllocatePopulation:
    def test_uniform_25_clusters(self):
        mix = PopulationMix(weights={i: 1 / 25 for i in range(25)})
        counts = allocate_population(mix, 100)
        assert all(counts[i] == 4 for i in range(25))

    def test_half_half_three_agents(self):
        mix = PopulationMix(weights={0: 0.5, 1: 0.5})
        assert allocate_population(mix, 3) == {0: 2, 1: 1}

    def test_hand_apportionment(self):
        mix = PopulationMix(weights={0: 0.12, 1: 0.88})
        assert allocate_population(mix, 1024) == {0: 123, 1: 901}

    def test_zero_weight_cluster_gets_zero(self):
        mix = PopulationMix(weights={0: 0.0, 1: 1.0})
        assert allocate_population(mix, 7) == {0: 0, 1: 7}

    def test_counts_always_sum_to_n(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            k = int(rng.integers(1, 12))
            w = rng.dirichlet(np.ones(k))
            mix = PopulationMix(weights={i: float(x) for i, x in enumerate(w)})
            n = int(rng.integers(1, 500))
            counts = allocate_population(mix, n)
            assert sum(counts.values()) == n
            for i, x in enumerate(w):
                assert math.floor(x * n) <= counts[i] <= math.ceil(x * n)
