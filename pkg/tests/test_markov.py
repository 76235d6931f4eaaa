import math

import numpy as np
import pytest

from conftest import make_dataset
from trajpriv.dp import PrivacyBudget
from trajpriv.geo import BoundingBox, Trajectory, TrajectoryDataset
from trajpriv.markov import (
    AdaptiveGrid,
    MarkovModel,
    MarkovSynthesizer,
    SynthConfig,
    build_grid,
    fit_markov_dp,
    generate_walks,
    to_trajectories,
)

INF = math.inf


def corpus_from_cells(cell_walks, grid, prefix="c"):
    """Point trajectories whose locate() sequences equal the given cell walks."""
    rng = np.random.default_rng(123)
    trajs = []
    for i, walk in enumerate(cell_walks):
        pts = grid.sample_points(np.asarray(walk, dtype=int), rng)
        trajs.append(Trajectory(f"{prefix}{i}", pts))
    return TrajectoryDataset(trajs, bbox=grid.bbox)


class TestSynthConfig:
    def test_split_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SynthConfig(budget_split=(0.5, 0.4, 0.4))

    def test_zero_share_rejected_for_finite_budget(self):
        cfg = SynthConfig(eps_total=1.0, budget_split=(0.0, 0.5, 0.5))
        with pytest.raises(ValueError, match="positive"):
            cfg.stage_epsilons()

    def test_infinite_budget_allows_any_split(self):
        cfg = SynthConfig(eps_total=INF, budget_split=(0.0, 0.5, 0.5))
        assert cfg.stage_epsilons() == (INF, INF, INF)

    def test_walk_cap_default(self):
        assert SynthConfig(g1=8).walk_cap == 32
        assert SynthConfig(g1=8, max_walk_length=5).walk_cap == 5


class TestAdaptiveGrid:
    def test_leaf_count(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=4, g2=3, subdivided=[5])
        assert grid.n_leaves == 15 + 9

    def test_locate_unsubdivided(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        pts = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        np.testing.assert_array_equal(grid.locate(pts), [0, 1, 2, 3])

    def test_locate_edges_belong_to_last_cell(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        np.testing.assert_array_equal(grid.locate(np.array([[1.0, 1.0]])), [3])

    def test_partition_property(self, rng, unit_box):
        for _ in range(20):
            g1 = int(rng.integers(2, 6))
            g2 = int(rng.integers(2, 4))
            n_sub = int(rng.integers(0, g1 * g1))
            subdivided = rng.choice(g1 * g1, size=n_sub, replace=False)
            grid = AdaptiveGrid(unit_box, g1, g2, subdivided)
            pts = np.column_stack([rng.uniform(0, 1, 200), rng.uniform(0, 1, 200)])
            leaves = grid.locate(pts)
            assert leaves.min() >= 0 and leaves.max() < grid.n_leaves
            for p, leaf in zip(pts, leaves):
                lat0, lon0, lat1, lon1 = grid.cell_bounds(leaf)
                assert lat0 <= p[0] <= lat1 and lon0 <= p[1] <= lon1

    def test_sample_points_inside_cells(self, rng, unit_box):
        grid = AdaptiveGrid(unit_box, g1=3, g2=2, subdivided=[0, 4])
        leaves = rng.integers(0, grid.n_leaves, size=500)
        pts = grid.sample_points(leaves, rng)
        np.testing.assert_array_equal(grid.locate(pts), leaves)

    def test_dict_round_trip(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=4, g2=2, subdivided=[1, 7], eps_grid=2.0)
        again = AdaptiveGrid.from_dict(grid.to_dict())
        assert again.subdivided == grid.subdivided
        assert again.eps_grid == 2.0
        assert again.n_leaves == grid.n_leaves


class TestBuildGrid:
    def test_uniform_data_below_threshold_no_subdivision(self, unit_box):
        d = make_dataset(n=50, length=8, seed=0)
        grid = build_grid(d, INF, SynthConfig(eps_total=INF, g1=2, threshold=3.0),
                          np.random.default_rng(0))
        assert grid.subdivided == ()

    def test_single_hot_cell_subdivided(self, unit_box):
        pts = np.full((10, 2), 0.1)  # all mass in cell (0, 0) of a 2x2 grid
        d = TrajectoryDataset([Trajectory("a", pts)], bbox=unit_box)
        grid = build_grid(d, INF, SynthConfig(eps_total=INF, g1=2, threshold=2.0),
                          np.random.default_rng(0))
        assert grid.subdivided == (0,)

    def test_requires_bbox(self):
        d = make_dataset(n=3).replace(bbox=None)
        with pytest.raises(ValueError, match="bbox"):
            build_grid(d, INF, SynthConfig(), np.random.default_rng(0))

    def test_empty_dataset_rejected(self, unit_box):
        d = TrajectoryDataset([], bbox=unit_box)
        with pytest.raises(ValueError, match="empty"):
            build_grid(d, INF, SynthConfig(), np.random.default_rng(0))


class TestFitMarkov:
    def test_mle_recovery_on_toy_corpus(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[], eps_grid=INF)
        # 10 walks A -> B where A = cell 0, B = cell 3
        d = corpus_from_cells([[0, 3]] * 10, grid)
        model = fit_markov_dp(d, grid, INF, INF, np.random.default_rng(0))
        row = np.maximum(model.first_order[0], 0.0)
        probs = row / row.sum()
        assert probs[3] == 1.0

    def test_budget_is_sequential_composition(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[], eps_grid=0.25)
        d = corpus_from_cells([[0, 3]] * 3, grid)
        model = fit_markov_dp(d, grid, 0.5, 0.25, np.random.default_rng(0))
        assert model.budget.epsilon == 1.0
        assert model.budget.adjacency == "replace-one"

    def test_noise_magnitude_matches_laplace_mad(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[], eps_grid=INF)
        d = corpus_from_cells([[0, 3]] * 10, grid)
        exact = fit_markov_dp(d, grid, INF, INF, np.random.default_rng(0)).first_order
        eps = 2.0
        lam = 2.0 * (2 + 1) / eps  # collapsed length 2, sensitivity 2(L+1)
        rng = np.random.default_rng(1)
        devs = []
        for _ in range(1000):
            noisy = fit_markov_dp(d, grid, eps, INF, rng).first_order
            devs.append(np.abs(noisy - exact).mean())
        assert np.mean(devs) == pytest.approx(lam, rel=0.05)

    def test_empty_dataset_rejected(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        with pytest.raises(ValueError, match="empty"):
            fit_markov_dp(TrajectoryDataset([], bbox=unit_box), grid, 1.0, 1.0,
                          np.random.default_rng(0))

    def test_max_states_guard(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=8, g2=4, subdivided=range(64))
        d = make_dataset(n=3, length=4)
        with pytest.raises(ValueError, match="max_states"):
            fit_markov_dp(d, grid, 1.0, 1.0, np.random.default_rng(0), max_states=256)

    def test_duplicate_cells_collapsed(self, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[], eps_grid=INF)
        d = corpus_from_cells([[0, 0, 0, 3, 3]] * 4, grid)
        model = fit_markov_dp(d, grid, INF, INF, np.random.default_rng(0))
        assert model.first_order[0, 0] == 0.0  # self-transitions removed
        assert model.first_order[0, 3] == 4.0

    def test_model_json_round_trip(self, tmp_path, unit_box):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[1], eps_grid=0.5)
        d = corpus_from_cells([[0, 3], [3, 0]], grid)
        model = fit_markov_dp(d, grid, 0.3, 0.2, np.random.default_rng(0))
        path = tmp_path / "model.json"
        model.save(path)
        again = MarkovModel.load(path)
        np.testing.assert_array_equal(again.first_order, model.first_order)
        np.testing.assert_array_equal(again.second_order, model.second_order)
        assert again.budget == model.budget
        assert again.grid.subdivided == model.grid.subdivided


class TestGenerateWalks:
    def _model(self, first, second=None, grid=None, unit_box=None):
        box = unit_box or BoundingBox(0, 0, 1, 1)
        grid = grid or AdaptiveGrid(box, g1=2, g2=2, subdivided=[], eps_grid=INF)
        s = grid.n_leaves + 2
        fo = np.zeros((s, s))
        for (a, b), v in first.items():
            fo[a, b] = v
        so = np.zeros((s, s, s))
        for (a, b, c), v in (second or {}).items():
            so[a, b, c] = v
        return MarkovModel(grid, fo, so, PrivacyBudget(1.0))

    def test_deterministic_chain(self):
        # START -> A -> END with A = cell 0; START = 4, END = 5 on a 2x2 grid
        model = self._model({(4, 0): 10.0, (0, 5): 10.0})
        walks = generate_walks(model, 50, np.random.default_rng(0))
        assert all(len(w) == 1 and w[0] == 0 for w in walks)

    def test_walk_length_capped(self):
        # A -> B -> A forever, no END mass
        model = self._model({(4, 0): 1.0, (0, 3): 1.0, (3, 0): 1.0})
        walks = generate_walks(model, 20, np.random.default_rng(0), max_walk_length=7)
        assert all(len(w) == 7 for w in walks)

    def test_two_state_symmetric_frequencies(self):
        model = self._model({
            (4, 0): 1.0, (4, 3): 1.0,
            (0, 0): 0.0, (0, 3): 1.0, (3, 0): 1.0,
        })
        walks = generate_walks(model, 2000, np.random.default_rng(1),
                               max_walk_length=50)
        states = np.concatenate(walks)
        assert len(states) >= 100_000
        freq_a = (states == 0).mean()
        assert freq_a == pytest.approx(0.5, abs=0.02)

    def test_all_zero_model_rejected(self):
        model = self._model({})
        with pytest.raises(ValueError, match="START"):
            generate_walks(model, 1, np.random.default_rng(0))

    def test_second_order_preferred_over_first(self):
        # First-order alone would allow 0 -> 3, but the (START, 0) context
        # deterministically sends walks to cell 1.
        model = self._model(
            first={(4, 0): 1.0, (0, 3): 1.0, (0, 1): 1.0, (1, 5): 1.0, (3, 5): 1.0},
            second={(4, 0, 1): 5.0},
        )
        walks = generate_walks(model, 30, np.random.default_rng(2))
        assert all(w.tolist() == [0, 1] for w in walks)

    def test_negative_counts_clamped(self):
        model = self._model({(4, 0): 5.0, (4, 3): -50.0, (0, 5): 1.0})
        walks = generate_walks(model, 40, np.random.default_rng(3))
        assert all(w[0] == 0 for w in walks)


class TestToTrajectories:
    def test_single_cell_constant_trajectory(self, unit_box, rng):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        out = to_trajectories([np.array([2])], grid, 6, rng)
        t = out[0]
        assert len(t) == 6
        assert np.all(t.points == t.points[0])
        lat0, lon0, lat1, lon1 = grid.cell_bounds(2)
        assert lat0 <= t.points[0, 0] <= lat1

    def test_points_inside_source_cells(self, unit_box, rng):
        grid = AdaptiveGrid(unit_box, g1=3, g2=2, subdivided=[4])
        paths = [np.array([0, 5, 9]), np.array([1, 2])]
        for path in paths:
            pts = grid.sample_points(path, rng)
            np.testing.assert_array_equal(grid.locate(pts), path)

    def test_fixed_length_and_bbox(self, unit_box, rng):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        out = to_trajectories([np.array([0, 3]), np.array([1])], grid, 10, rng)
        assert out.fixed_length == 10
        assert out.bbox == unit_box
        assert len(out) == 2

    def test_empty_paths_rejected(self, unit_box, rng):
        grid = AdaptiveGrid(unit_box, g1=2, g2=2, subdivided=[])
        with pytest.raises(ValueError, match="walks"):
            to_trajectories([], grid, 5, rng)


class TestMarkovSynthesizer:
    def test_fit_sample_roundtrip(self):
        d = make_dataset(n=60, length=10, seed=8)
        synth = MarkovSynthesizer(eps_total=5.0, g1=3, random_state=0).fit(d)
        syn = synth.sample(25)
        assert len(syn) == 25
        assert syn.fixed_length == 10
        assert syn.bbox == d.bbox
        assert d.bbox.contains(syn.all_points()).all()

    def test_budget_exact(self):
        d = make_dataset(n=30, length=6, seed=9)
        synth = MarkovSynthesizer(eps_total=1.0, g1=2, random_state=0).fit(d)
        assert synth.budget_ == PrivacyBudget(1.0, 0.0, adjacency="replace-one")

    def test_infinite_budget(self):
        d = make_dataset(n=30, length=6, seed=9)
        synth = MarkovSynthesizer(eps_total=INF, g1=2, random_state=0).fit(d)
        assert math.isinf(synth.budget_.epsilon)
        assert math.isinf(synth.model_.budget.epsilon)

    def test_deterministic_given_seed(self):
        d = make_dataset(n=40, length=8, seed=10)
        a = MarkovSynthesizer(eps_total=2.0, g1=2, random_state=5).fit(d).sample(10)
        b = MarkovSynthesizer(eps_total=2.0, g1=2, random_state=5).fit(d).sample(10)
        assert a == b

    def test_get_params(self):
        synth = MarkovSynthesizer(eps_total=3.0, g1=4)
        params = synth.get_params()
        assert params["eps_total"] == 3.0 and params["g1"] == 4


def test_sample_before_fit_rejected():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        MarkovSynthesizer().sample(3)
