from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iminer import evo, fcm, tune
from iminer.evo import (Chromosome, EvolutionHistory, GAConfig, check_chromosome, crossover, decode, encode,
                        evaluate_chromosome, evolve, fitness, from_vector, init_population, mutate, mutate_gene,
                        mutation_step, rank_probabilities, rank_select)
from iminer.ingest import FeatureTable, design_matrix, normalize
from iminer.metrics import rmse

BOUNDS = (np.zeros(2), np.ones(2))


def valid(chr, config=GAConfig()):
    check_chromosome(chr, BOUNDS, config)
    return True


def toy_table(rng, n=60):
    req = np.concatenate([rng.uniform(0, 10, n // 2), rng.uniform(30, 40, n - n // 2)])
    return normalize(FeatureTable(index=np.arange(1, n + 1), requests=req, bytes=req * 3 + rng.uniform(0, 1, n),
                                  target=np.roll(req, -1)))


class TestConfig:
    def test_table_defaults(self):
        c = GAConfig()
        assert (c.population_size, c.max_generations, c.mfs_per_input, c.gd_epochs) == (30, 35, 3, 10)
        assert (c.ranking_pressure, c.elitism_fraction, c.mutation_rate_start) == (0.5, 0.05, 0.5)
        assert c.elite_count == 2
        assert c.n_rules == 81

    def test_elite_floor(self):
        assert GAConfig(population_size=4).elite_count == 1

    @pytest.mark.parametrize("kw", [dict(population_size=1), dict(elitism_fraction=0.0), dict(C_max=1),
                                    dict(ranking_pressure=1.5), dict(mutation_shape_b=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            GAConfig(**kw)


class TestPopulation:
    def test_size_and_validity(self, rng):
        pop = init_population(GAConfig(), BOUNDS, rng)
        assert len(pop) == 30
        assert all(valid(c) for c in pop)
        assert all(c.n_rules == 81 for c in pop)

    def test_deterministic(self):
        a = init_population(GAConfig(), BOUNDS, np.random.default_rng(7))
        b = init_population(GAConfig(), BOUNDS, np.random.default_rng(7))
        assert a == b

    def test_bounds_must_be_finite(self, rng):
        with pytest.raises(ValueError):
            init_population(GAConfig(), (np.zeros(2), np.array([1.0, np.inf])), rng)


class TestDecode:
    def test_full_grid(self, rng):
        chr = init_population(GAConfig(), BOUNDS, rng)[0]
        dec = decode(chr, GAConfig(), BOUNDS)
        assert dec.rule_indices.size == 81
        assert dec.init_centers.shape == (12, 2)

    def test_two_active(self, rng):
        chr = init_population(GAConfig(), BOUNDS, rng)[0]
        active = np.zeros(12, dtype=bool)
        active[[3, 8]] = True
        dec = decode(Chromosome(active, chr.centers, chr.rules, chr.lr, chr.momentum, chr.tnorm_p), GAConfig())
        assert dec.init_centers.shape[0] == 2
        assert np.array_equal(dec.init_centers, chr.centers[[3, 8]])

    def test_round_trip(self, rng):
        for chr in init_population(GAConfig(), BOUNDS, rng)[:5]:
            chr = mutate(chr, 1, 35, GAConfig(), BOUNDS, rng)
            assert from_vector(encode(chr), GAConfig(), 2) == chr

    def test_invalid(self, rng):
        chr = init_population(GAConfig(), BOUNDS, rng)[0]
        bad = Chromosome(np.eye(12, dtype=bool)[0], chr.centers, chr.rules, chr.lr, chr.momentum, chr.tnorm_p)
        with pytest.raises(ValueError):
            decode(bad, GAConfig())
        bad = Chromosome(chr.active, chr.centers, chr.rules, 0.9, chr.momentum, chr.tnorm_p)
        with pytest.raises(ValueError):
            decode(bad, GAConfig())

    def test_json_round_trip(self, rng):
        chr = init_population(GAConfig(), BOUNDS, rng)[0]
        assert Chromosome.from_dict(chr.to_dict()) == chr


class TestFitness:
    config = GAConfig(gd_epochs=5, C_max=4)

    def chromosome(self, rng, n_rules=81):
        chr = init_population(self.config, BOUNDS, rng)[0]
        rules = np.zeros(81, dtype=bool)
        rules[:n_rules] = True
        return Chromosome(chr.active, chr.centers, rules, 0.1, 0.5, 1.0)

    def test_perfect_model_scores_zero(self, rng):
        n = 40
        table = normalize(FeatureTable(index=np.arange(1, n + 1), requests=rng.uniform(0, 1, n),
                                       bytes=rng.uniform(0, 1, n), target=np.full(n, 3.0)))
        table = FeatureTable(table.index, table.requests, table.bytes, np.zeros(n), scaler=table.scaler)
        assert fitness(self.chromosome(rng), table, self.config) == 0.0

    def test_matches_metric_recomputation(self, rng):
        table = toy_table(rng)
        ev = evaluate_chromosome(self.chromosome(rng, 30), table, self.config)
        X, d = design_matrix(ev.train, ev.n_clusters)
        assert ev.fitness == rmse(ev.model.predict(X), d)
        assert ev.n_rules == 30

    def test_pipeline_stages(self, rng):
        table = toy_table(rng)
        chr = self.chromosome(rng)
        ev = evaluate_chromosome(chr, table, self.config)
        ref = fcm.fcm_run(evo.cluster_space(table), decode(chr, self.config).init_centers)
        assert ev.clusters.objective == ref.objective
        assert np.all(np.diff(ev.clusters.centers[:, 0]) >= 0)
        assert sorted(ev.train.raw_index.tolist()) == list(range(1, len(table) + 1))
        assert np.all(np.diff(ev.train.cluster) >= 0)
        untuned = evo.base_model(self.config, 1.0)
        X, d = design_matrix(ev.train, ev.n_clusters)
        assert tune.output_error(ev.model, (X, d)) <= tune.output_error(untuned, (X, d))

    def test_deterministic(self, rng):
        table = toy_table(rng)
        chr = self.chromosome(rng)
        assert fitness(chr, table, self.config) == fitness(chr, table, self.config)

    def test_needs_normalized_table(self, rng):
        t = toy_table(rng)
        raw = FeatureTable(t.index, t.requests, t.bytes, t.target)
        with pytest.raises(ValueError):
            fitness(self.chromosome(rng), raw, self.config)

    def test_degenerate_seeds_score_inf(self, rng):
        table = toy_table(rng)
        chr = self.chromosome(rng)
        centers = np.array(chr.centers)
        centers[1] = centers[0]
        assert fitness(Chromosome(chr.active, centers, chr.rules, 0.1, 0.5, 1.0), table, self.config) == math.inf


class TestRankSelect:
    def test_uniform_on_ties(self, rng):
        p = rank_probabilities([2.0] * 5, 0.5)
        assert np.allclose(p, 0.2)
        counts = np.bincount(rank_select([2.0] * 5, 0.5, 20000, rng), minlength=5) / 20000
        assert np.allclose(counts, 0.2, atol=0.015)

    def test_two_individuals_ratio(self, rng):
        p = rank_probabilities([0.1, 0.9], 0.5)
        assert p[0] / p[1] == pytest.approx(3.0)
        draws = rank_select([0.1, 0.9], 0.5, 10**4, rng)
        best = np.count_nonzero(draws == 0)
        assert best / (10**4 - best) == pytest.approx(3.0, rel=0.08)

    def test_empty(self, rng):
        assert rank_select([1.0, 2.0], 0.5, 0, rng).size == 0

    def test_linear_in_rank(self):
        p = rank_probabilities([5.0, 1.0, 3.0, 4.0], 0.5)
        order = np.argsort(-p)
        assert order.tolist() == [1, 2, 3, 0]
        assert np.allclose(np.diff(np.sort(p)), np.diff(np.sort(p))[0])
        assert p.sum() == pytest.approx(1.0)

    def test_inf_ranks_last(self):
        p = rank_probabilities([math.inf, 1.0, 2.0], 0.5)
        assert p[0] == p.min()


class TestMutateGene:
    def test_endpoint_fixed(self):
        for g in (0.0, 0.3, 0.99):
            assert mutate_gene(0.4, 0.0, 1.0, 35, 35, 5.0, g, 0) == 0.4
            assert mutate_gene(0.4, 0.0, 1.0, 35, 35, 5.0, g, 1) == 0.4

    def test_gamma_zero_hits_boundary(self):
        assert mutate_gene(0.4, 0.0, 1.0, 3, 35, 5.0, 0.0, 0) == 1.0
        assert mutate_gene(0.4, 0.0, 1.0, 3, 35, 5.0, 0.0, 1) == 0.0

    def test_substitution(self):
        assert mutate_gene(0.0, 0.0, 1.0, 0, 10, 1.0, 0.5, 0) == pytest.approx(0.5)

    def test_step_shrinks(self):
        assert mutation_step(0.9, 1.0, 1.0, 5.0, 0.5) < mutation_step(0.1, 1.0, 1.0, 5.0, 0.5)

    def test_outside_interval(self):
        with pytest.raises(ValueError):
            mutate_gene(1.5, 0.0, 1.0, 0, 10, 5.0, 0.5, 0)

    @given(st.floats(-10, 10), st.floats(0.0, 20.0), st.floats(0, 1), st.floats(0, 1), st.integers(0, 1),
           st.floats(0.1, 10), st.integers(1, 100))
    def test_in_bounds(self, a, span, frac, gamma, omega, b_shape, t_max):
        b = a + span
        x = a + frac * span
        t = frac * t_max
        y = mutate_gene(min(x, b), a, b, t, t_max, b_shape, gamma, omega)
        assert a <= y <= b


class TestOperators:
    def test_identical_parents(self, rng):
        p = init_population(GAConfig(), BOUNDS, rng)[0]
        c1, c2 = crossover(p, p, rng)
        assert np.allclose(c1.centers, p.centers, atol=1e-15) and np.allclose(c2.centers, p.centers, atol=1e-15)
        assert np.array_equal(c1.rules, p.rules) and np.array_equal(c2.active, p.active)
        assert c1.lr == pytest.approx(p.lr, rel=1e-15)

    def test_convex_hull(self, rng):
        a, b = init_population(GAConfig(), BOUNDS, rng)[:2]
        for _ in range(20):
            c1, c2 = crossover(a, b, rng)
            lo, hi = np.minimum(a.centers, b.centers), np.maximum(a.centers, b.centers)
            for c in (c1, c2):
                assert np.all(c.centers >= lo - 1e-15) and np.all(c.centers <= hi + 1e-15)
                assert valid(c)

    def test_repair_rules(self, rng):
        a = init_population(GAConfig(), BOUNDS, rng)[0]
        empty = Chromosome(a.active, a.centers, np.zeros(81, dtype=bool), a.lr, a.momentum, a.tnorm_p)
        one = np.zeros(81, dtype=bool)
        one[5] = True
        b = Chromosome(a.active, a.centers, one, a.lr, a.momentum, a.tnorm_p)
        for _ in range(10):
            for c in crossover(empty, b, rng):
                assert c.n_rules >= 1
        for c in crossover(empty, empty, rng):
            assert c.n_rules == 1

    def test_repair_centers(self, rng):
        a = init_population(GAConfig(), BOUNDS, rng)[0]
        none = np.zeros(12, dtype=bool)
        z = Chromosome(none, a.centers, a.rules, a.lr, a.momentum, a.tnorm_p)
        for c in crossover(z, z, rng):
            assert c.n_active == 2

    def test_zero_rate_is_identity(self, rng):
        cfg = GAConfig(mutation_rate_start=0.0)
        p = init_population(cfg, BOUNDS, rng)[0]
        assert mutate(p, 3, 35, cfg, BOUNDS, rng) == p

    def test_endpoint_only_flips_bits(self, rng):
        cfg = GAConfig()
        p = init_population(cfg, BOUNDS, rng)[0]
        for _ in range(10):
            m = mutate(p, 35, 35, cfg, BOUNDS, rng)
            assert np.array_equal(m.centers, p.centers)
            assert (m.lr, m.momentum, m.tnorm_p) == (p.lr, p.momentum, p.tnorm_p)

    def test_annealing(self, rng):
        cfg = GAConfig()
        p = init_population(cfg, BOUNDS, rng)[0]
        early = np.mean([np.abs(mutate(p, 3.5, 35, cfg, BOUNDS, rng).centers - p.centers).mean() for _ in range(400)])
        late = np.mean([np.abs(mutate(p, 31.5, 35, cfg, BOUNDS, rng).centers - p.centers).mean() for _ in range(400)])
        assert late < early

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0, 35))
    def test_invariants_preserved(self, seed, t):
        r = np.random.default_rng(seed)
        cfg = GAConfig()
        a, b = init_population(cfg, BOUNDS, r)[:2]
        for _ in range(3):
            a, b = crossover(a, b, r)
            a, b = mutate(a, t, 35, cfg, BOUNDS, r), mutate(b, t, 35, cfg, BOUNDS, r)
            assert valid(a) and valid(b)


class TestEvolve:
    config = GAConfig(population_size=6, max_generations=4, gd_epochs=3, C_max=4, seed=11)

    def test_small_run(self, rng):
        train, test = toy_table(rng, 60), toy_table(rng, 20)
        res = evolve(train, test, self.config)
        assert len(res.history) == 4
        assert np.all(np.diff(res.history.train_rmse) <= 0)
        assert res.fitness == res.history.records[-1].train_rmse
        assert res.model.n_rules == res.best.n_rules == res.history.records[-1].rules
        assert res.clusters.n_clusters == res.history.records[-1].clusters
        assert np.all(np.isfinite(res.history.test_rmse))

    def test_deterministic(self, rng):
        train, test = toy_table(rng, 60), toy_table(rng, 20)
        a = evolve(train, test, self.config)
        b = evolve(train, test, self.config)
        assert a.history.to_csv() == b.history.to_csv()
        assert a.model.to_json() == b.model.to_json()

    def test_target_error_stops_early(self, rng):
        train = toy_table(rng, 40)
        cfg = GAConfig(population_size=4, max_generations=5, gd_epochs=1, C_max=3, target_error=10.0)
        res = evolve(train, None, cfg)
        assert len(res.history) == 1
        assert math.isnan(res.history.records[0].test_rmse)

    def test_history_csv_round_trip(self, rng):
        res = evolve(toy_table(rng, 40), None, GAConfig(population_size=4, max_generations=2, gd_epochs=1, C_max=3))
        text = res.history.to_csv()
        assert text.splitlines()[0] == "generation,train_rmse,test_rmse,rules,clusters"
        back = EvolutionHistory.from_csv(text)
        assert back.to_csv() == text
