"""Selection strategies, the CG solver, and the influence machinery, checked
against hand oracles, dense solves, and actual leave-one-out retraining."""

import dataclasses

import numpy as np
import pytest
from scipy.stats import spearmanr

from replaygraph.linear import LinearModel, Sample
from replaygraph.selection import (Candidate, CgSettings, ExperienceItem,
                                   cg_solve, coverage_counts, fit_to_stationarity,
                                   group_by_class, influence_scores,
                                   loo_parameter_change, loo_retrain_oracle,
                                   predicted_loss_change, select_cm, select_im,
                                   select_mf, select_random)


def cand(node, vec, label, attributes=None, embedding=None, task=0):
    return Candidate(node=node, label=label, inputs=np.asarray(vec, dtype=np.float64),
                     attributes=attributes, embedding=embedding, task=task)


def two_blob_problem(seed, n_per_class=15, dim=4, weight_decay=0.3,
                     separation=1.5, probes_per_class=5):
    """Overlapping Gaussian blobs: template model, train samples, probes.

    The decay keeps single-sample removals inside the linear-response regime
    the influence approximation assumes.
    """
    rng = np.random.default_rng(seed)
    template = LinearModel.zeros(2, dim, weight_decay, active_classes=(0, 1))
    centers = {0: np.full(dim, -separation / 2), 1: np.full(dim, separation / 2)}

    def draw(count):
        out = []
        for label in (0, 1):
            for _ in range(count):
                out.append(Sample(centers[label] + rng.standard_normal(dim), label))
        return out

    return template, draw(n_per_class), draw(probes_per_class)


class TestGroupByClass:
    def test_groups_sorted_by_label_and_node(self):
        cands = [cand(5, [0.0], 1), cand(2, [0.0], 0), cand(1, [0.0], 1)]
        grouped = group_by_class(cands)
        assert list(grouped) == [0, 1]
        assert [c.node for c in grouped[1]] == [1, 5]

    def test_empty_input_gives_empty_mapping(self):
        assert group_by_class([]) == {}


class TestSelectRandom:
    def test_e_covering_class_selects_everything(self):
        by_class = {0: [cand(i, [float(i)], 0) for i in range(3)]}
        items = select_random(by_class, e=10, seed=0)
        assert sorted(i.source_node for i in items) == [0, 1, 2]

    def test_singleton_class(self):
        by_class = {0: [cand(7, [1.0], 0)]}
        items = select_random(by_class, e=1, seed=3)
        assert [i.source_node for i in items] == [7]

    def test_seed_determinism(self):
        by_class = {0: [cand(i, [float(i)], 0) for i in range(20)]}
        a = select_random(by_class, e=5, seed=11)
        b = select_random(by_class, e=5, seed=11)
        c = select_random(by_class, e=5, seed=12)
        assert [i.source_node for i in a] == [i.source_node for i in b]
        assert [i.source_node for i in a] != [i.source_node for i in c]

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError, match="class 0 has no candidates"):
            select_random({0: []}, e=1, seed=0)

    def test_e_below_one_rejected(self):
        with pytest.raises(ValueError, match="e must be >= 1"):
            select_random({0: [cand(0, [0.0], 0)]}, e=0, seed=0)


class TestSelectMf:
    def test_prototype_at_middle_point(self):
        by_class = {0: [cand(0, [0.0, 0.0], 0), cand(1, [2.0, 2.0], 0),
                        cand(2, [1.0, 1.0], 0)]}
        items = select_mf(by_class, e=1)
        assert [i.source_node for i in items] == [2]

    def test_identical_vectors_tie_to_lowest_node(self):
        by_class = {0: [cand(9, [1.0], 0), cand(4, [1.0], 0), cand(6, [1.0], 0)]}
        items = select_mf(by_class, e=1)
        assert [i.source_node for i in items] == [4]

    def test_line_example_orders_by_distance(self):
        # positions 0, 1, 10: prototype 11/3, distances 3.67, 2.67, 6.33
        by_class = {0: [cand(0, [0.0], 0), cand(1, [1.0], 0), cand(2, [10.0], 0)]}
        items = select_mf(by_class, e=2)
        assert [i.source_node for i in items] == [1, 0]

    def test_attribute_and_embedding_paths_identical_on_same_vectors(self, rng):
        vecs = rng.standard_normal((6, 3))
        by_class = {0: [cand(i, vecs[i], 0, attributes=vecs[i], embedding=vecs[i])
                        for i in range(6)]}
        a = select_mf(by_class, e=2, representation="attribute")
        b = select_mf(by_class, e=2, representation="embedding")
        assert [i.source_node for i in a] == [i.source_node for i in b]

    def test_embedding_geometry_can_override_attribute_geometry(self):
        # node 0 is the attribute-space prototype, node 2 the embedding-space one
        by_class = {0: [cand(0, [0.0], 0, attributes=np.array([1.0]),
                             embedding=np.array([5.0])),
                        cand(1, [0.0], 0, attributes=np.array([0.0]),
                             embedding=np.array([0.0])),
                        cand(2, [0.0], 0, attributes=np.array([2.0]),
                             embedding=np.array([1.0]))]}
        by_attr = select_mf(by_class, e=1, representation="attribute")
        by_emb = select_mf(by_class, e=1, representation="embedding")
        assert [i.source_node for i in by_attr] == [0]
        assert [i.source_node for i in by_emb] == [2]

    def test_item_carries_model_input_not_geometry_vector(self):
        inputs = np.array([3.0, 3.0])
        by_class = {0: [cand(0, inputs, 0, attributes=np.array([1.0, 0.0]))]}
        item = select_mf(by_class, e=1, representation="attribute")[0]
        assert np.array_equal(item.input, inputs)

    def test_unknown_representation_rejected(self):
        by_class = {0: [cand(0, [0.0], 0)]}
        with pytest.raises(ValueError, match="representation"):
            select_mf(by_class, e=1, representation="latent")


class TestCoverage:
    def test_counts_exclude_same_class_and_respect_radius(self):
        # classes on a line, A at {0, 5}, B at {1}; d=2
        by_class = {0: [cand(10, [0.0], 0), cand(11, [5.0], 0)],
                    1: [cand(20, [1.0], 1)]}
        counts, d = coverage_counts(by_class, d=2.0)
        assert d == 2.0
        assert counts[0].tolist() == [1, 0]
        assert counts[1].tolist() == [1]
        items = select_cm(by_class, e=1, d=2.0)
        by_label = {i.label: i.source_node for i in items}
        assert by_label[0] == 11

    def test_distance_exactly_d_does_not_count(self):
        by_class = {0: [cand(0, [0.0], 0)], 1: [cand(1, [2.0], 1)]}
        counts, _ = coverage_counts(by_class, d=2.0)
        assert counts[0].tolist() == [0]

    def test_tiny_d_makes_all_counts_zero_and_ties_by_node(self):
        by_class = {0: [cand(3, [0.0], 0), cand(1, [0.1], 0)],
                    1: [cand(5, [0.05], 1)]}
        items = select_cm(by_class, e=1, d=1e-9)
        by_label = {i.label: i.source_node for i in items}
        assert by_label[0] == 1

    def test_single_class_counts_are_zero(self):
        by_class = {0: [cand(i, [float(i)], 0) for i in range(4)]}
        counts, _ = coverage_counts(by_class, d="auto")
        assert counts[0].tolist() == [0, 0, 0, 0]
        items = select_cm(by_class, e=2, d="auto")
        assert [i.source_node for i in items] == [0, 1]

    def test_auto_d_is_median_cross_class_distance(self):
        by_class = {0: [cand(0, [0.0], 0), cand(1, [4.0], 0)],
                    1: [cand(2, [10.0], 1)]}
        _, d = coverage_counts(by_class, d="auto")
        assert d == pytest.approx(8.0)  # median of {10, 6}

    def test_nonpositive_d_rejected(self):
        by_class = {0: [cand(0, [0.0], 0)], 1: [cand(1, [1.0], 1)]}
        with pytest.raises(ValueError, match="d must be positive"):
            coverage_counts(by_class, d=0.0)


class TestExperienceItem:
    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            ExperienceItem(np.array([np.nan]), 0, 0, 3)


class TestCgSolve:
    def test_identity_system_converges_in_one_iteration(self, rng):
        rhs = rng.standard_normal(8)
        result = cg_solve(lambda v: v, rhs)
        assert result.converged
        assert result.iterations == 1
        assert np.allclose(result.solution, rhs, atol=1e-12)

    def test_diagonal_system(self):
        h = np.diag([2.0, 4.0])
        result = cg_solve(lambda v: h @ v, np.array([2.0, 4.0]))
        assert result.converged
        assert np.allclose(result.solution, [1.0, 1.0], atol=1e-9)

    def test_random_spd_system_matches_dense_solve(self, rng):
        m = rng.standard_normal((5, 5))
        h = m @ m.T + np.eye(5)
        rhs = rng.standard_normal(5)
        result = cg_solve(lambda v: h @ v, rhs, CgSettings(residual_tol=1e-12))
        assert np.linalg.norm(result.solution - np.linalg.solve(h, rhs)) < 1e-6

    def test_zero_rhs_short_circuits(self):
        result = cg_solve(lambda v: v, np.zeros(4))
        assert result.converged
        assert result.iterations == 0
        assert np.array_equal(result.solution, np.zeros(4))

    def test_iteration_cap_reported_not_raised(self, rng):
        m = rng.standard_normal((20, 20))
        h = m @ m.T + 0.01 * np.eye(20)
        result = cg_solve(lambda v: h @ v, rng.standard_normal(20),
                          CgSettings(max_iters=1, residual_tol=1e-14))
        assert not result.converged
        assert result.iterations == 1

    def test_non_finite_operator_aborts(self):
        with pytest.raises(RuntimeError, match="non-finite"):
            cg_solve(lambda v: np.full_like(v, np.nan), np.ones(3))


class TestInfluenceScores:
    def test_identical_training_points_get_identical_scores(self):
        template, train, probes = two_blob_problem(seed=0)
        train = train + [Sample(train[0].input.copy(), train[0].label)]
        model = fit_to_stationarity(template, train)
        scores = influence_scores(model, train, probes)
        assert scores[0] == scores[-1]

    def test_empty_probe_set_rejected(self):
        template, train, _ = two_blob_problem(seed=0)
        model = fit_to_stationarity(template, train)
        with pytest.raises(ValueError, match="probe set is empty"):
            influence_scores(model, train, [])

    def test_zero_probe_gradient_gives_zero_scores(self):
        template, train, probes = two_blob_problem(seed=1)
        model = fit_to_stationarity(template, train)
        silent = [Sample(p.input, p.label, 0.0) for p in probes]
        assert np.array_equal(influence_scores(model, train, silent),
                              np.zeros(len(train)))

    def test_linear_in_probe_gradient(self):
        template, train, probes = two_blob_problem(seed=2)
        model = fit_to_stationarity(template, train)
        doubled = [Sample(p.input, p.label, 2.0) for p in probes]
        base = influence_scores(model, train, probes)
        scaled = influence_scores(model, train, doubled)
        assert np.allclose(scaled, 2.0 * base, rtol=1e-9)

    def test_rank_agreement_with_loo_retraining(self):
        # the quantity -score/N approximates actual probe-loss change from
        # removing each sample; rank correlation against full retraining
        template, train, probes = two_blob_problem(seed=7, n_per_class=15)
        model = fit_to_stationarity(template, train)
        scores = influence_scores(model, train, probes, CgSettings(damping=0.0))
        predicted = predicted_loss_change(scores, len(train))
        actual = np.array([loo_retrain_oracle(template, train, probes, i)
                           for i in range(len(train))])
        rho = spearmanr(predicted, actual).statistic
        assert rho >= 0.8

    def test_parameter_change_direction_matches_retraining(self):
        # removing sample k moves the optimum by about (1/N) H^-1 grad_CE_k
        cosines = []
        for seed in range(20):
            template, train, _ = two_blob_problem(seed=seed, n_per_class=15)
            model = fit_to_stationarity(template, train)
            rng = np.random.default_rng(seed)
            k = int(rng.integers(len(train)))
            bare = dataclasses.replace(model, weight_decay=0.0)
            g_k = bare.gradient([train[k]])
            solve = cg_solve(lambda v: model.hvp(train, v=v, damping=0.0), g_k,
                             CgSettings(residual_tol=1e-10, damping=0.0))
            predicted = solve.solution / len(train)
            actual = loo_parameter_change(template, train, k)
            cos = float(predicted @ actual
                        / (np.linalg.norm(predicted) * np.linalg.norm(actual)))
            cosines.append(cos)
        assert min(cosines) >= 0.9


class TestSelectIm:
    def test_e_covering_class_selects_everything(self):
        template, train, probes = two_blob_problem(seed=3, n_per_class=4)
        model = fit_to_stationarity(template, train)
        by_class = {0: [cand(i, s.input, 0) for i, s in enumerate(train) if s.label == 0]}
        items = select_im(model, by_class, e=10, probe_samples=probes)
        assert len(items) == 4

    def test_outlier_dominates_and_oracle_agrees(self):
        # a class-0 point planted inside the class-1 cluster carries the most
        # influence; the LOO oracle confirms it has the largest |loss change|
        rng = np.random.default_rng(5)
        dim = 3
        template = LinearModel.zeros(2, dim, 0.1, active_classes=(0, 1))
        tight = [Sample(np.full(dim, -1.0) + 0.05 * rng.standard_normal(dim), 0)
                 for _ in range(8)]
        other = [Sample(np.full(dim, 1.0) + 0.05 * rng.standard_normal(dim), 1)
                 for _ in range(8)]
        outlier = Sample(np.full(dim, 1.0), 0)
        train = tight + other + [outlier]
        probes = [Sample(np.full(dim, -1.0), 0), Sample(np.full(dim, 1.0), 1)]
        model = fit_to_stationarity(template, train)

        by_class = group_by_class(
            [cand(i, s.input, s.label) for i, s in enumerate(train)])
        items = select_im(model, by_class, e=1, probe_samples=probes)
        picked_class0 = next(i for i in items if i.label == 0)
        assert picked_class0.source_node == len(train) - 1

        changes = [abs(loo_retrain_oracle(template, train, probes, i))
                   for i, s in enumerate(train) if s.label == 0]
        class0_indices = [i for i, s in enumerate(train) if s.label == 0]
        assert class0_indices[int(np.argmax(changes))] == len(train) - 1

    def test_probe_weight_doubling_leaves_selection_unchanged(self):
        template, train, probes = two_blob_problem(seed=4)
        model = fit_to_stationarity(template, train)
        by_class = group_by_class([cand(i, s.input, s.label)
                                   for i, s in enumerate(train)])
        doubled = [Sample(p.input, p.label, 2.0) for p in probes]
        a = select_im(model, by_class, e=3, probe_samples=probes)
        b = select_im(model, by_class, e=3, probe_samples=doubled)
        assert [i.source_node for i in a] == [i.source_node for i in b]

    def test_signed_and_absolute_rankings_follow_scores(self):
        template, train, probes = two_blob_problem(seed=6)
        model = fit_to_stationarity(template, train)
        by_class = group_by_class([cand(i, s.input, s.label)
                                   for i, s in enumerate(train)])
        flat = [c for label in sorted(by_class) for c in by_class[label]]
        samples = [Sample(c.inputs, c.label) for c in flat]
        scores = influence_scores(model, samples, probes)

        for signed in (False, True):
            items = select_im(model, by_class, e=1, probe_samples=probes,
                              signed=signed)
            for label in sorted(by_class):
                idx = [i for i, c in enumerate(flat) if c.label == label]
                key = scores[idx] if signed else np.abs(scores[idx])
                expected = flat[idx[int(np.argmax(key))]].node
                picked = next(i.source_node for i in items if i.label == label)
                assert picked == expected

    def test_trace_csv_written(self, tmp_path):
        template, train, probes = two_blob_problem(seed=8, n_per_class=5)
        model = fit_to_stationarity(template, train)
        by_class = group_by_class([cand(i, s.input, s.label)
                                   for i, s in enumerate(train)])
        path = tmp_path / "trace.csv"
        select_im(model, by_class, e=2, probe_samples=probes, trace_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "class,node,score,selected"
        assert len(lines) == 1 + len(train)
        selected = [line for line in lines[1:] if line.endswith(",1")]
        assert len(selected) == 4  # e=2 per class, 2 classes


class TestLooOracle:
    def test_zero_weight_sample_changes_nothing(self):
        template, train, probes = two_blob_problem(seed=9, n_per_class=6)
        train = train + [Sample(np.ones(4), 0, weight=0.0)]
        change = loo_retrain_oracle(template, train, probes, len(train) - 1)
        assert abs(change) < 1e-6

    def test_duplicate_samples_are_interchangeable(self):
        template, train, probes = two_blob_problem(seed=10, n_per_class=6)
        dup = Sample(train[0].input.copy(), train[0].label)
        train = [dup] + train  # index 0 and 1 are now exact duplicates
        a = loo_retrain_oracle(template, train, probes, 0)
        b = loo_retrain_oracle(template, train, probes, 1)
        assert a == pytest.approx(b, abs=1e-6)

    def test_index_bounds_checked(self):
        template, train, probes = two_blob_problem(seed=0, n_per_class=2)
        with pytest.raises(IndexError):
            loo_retrain_oracle(template, train, probes, len(train))

    def test_cannot_remove_only_sample(self):
        template, _, probes = two_blob_problem(seed=0)
        sole = [Sample(np.ones(4), 0)]
        with pytest.raises(ValueError, match="only training sample"):
            loo_retrain_oracle(template, sole, probes, 0)


class TestPredictedLossChange:
    def test_sign_and_scale(self):
        out = predicted_loss_change(np.array([1.0, -2.0]), 4)
        assert np.allclose(out, [-0.25, 0.5])

    def test_population_size_checked(self):
        with pytest.raises(ValueError, match="population_size"):
            predicted_loss_change(np.array([1.0]), 0)
