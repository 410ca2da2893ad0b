import math

import numpy as np
import pytest

from helpers import THREE_CENTERS, clusters
from qsrmix.errors import InfeasibleFusionError
from qsrmix.geo import CartesianPoint, GeoPoint, ProjectionConfig, unproject
from qsrmix.gmm import GmmModel
from qsrmix.greedy import GreedyConfig
from qsrmix.grid import (
    GridSpec,
    Observation,
    ProbabilityGrid,
    derive_seed,
    infer_location,
    log_cell_masses,
    relation_heatmap,
    sweep_components,
)

SPEC = GridSpec()


def relation(distance, orientation, sd=(0.5, 2.0), label=""):
    return GmmModel([1.0], [[distance, orientation]], [np.diag(np.square(sd))], "diagonal", label)


def offset(spec, dx, dy, origin=None):
    return unproject(CartesianPoint(dx, dy), origin or spec.center, spec.projection)


class TestGridSpec:
    def test_defaults(self):
        assert SPEC.center == (0.0, 51.5)
        assert SPEC.projection.ref_lat == 51.5
        dlon, dlat = SPEC.cell_size
        assert dlon == pytest.approx(0.04)
        assert dlat == pytest.approx(0.02)

    def test_row_zero_is_north(self):
        lon, lat = SPEC.cell_centers()
        assert lat[0, 0] > lat[-1, 0]
        assert lon[0, 0] < lon[0, -1]
        assert SPEC.cell_center(0, 0) == pytest.approx((-0.98, 51.99))

    def test_cell_of(self):
        assert SPEC.cell_of(SPEC.cell_center(7, 31)) == (7, 31)
        with pytest.raises(ValueError):
            SPEC.cell_of(GeoPoint(5.0, 51.5))

    def test_area(self):
        spec = GridSpec(projection=ProjectionConfig(51.5, "raw-degrees"))
        assert spec.cell_area_km2 == pytest.approx(0.04 * 0.02 * 111.32 ** 2, rel=1e-14)

    def test_rejects_empty_bbox(self):
        with pytest.raises(ValueError):
            GridSpec(bbox=(1, -1, 51, 52))


class TestHeatmap:
    def test_tight_north(self):
        grid = relation_heatmap(relation(10.0, 90.0), SPEC, SPEC.center)
        target = offset(SPEC, 0.0, 10.0)
        assert grid.argmax() == SPEC.cell_of(target)

    def test_broad_model_is_flat(self):
        spec = GridSpec(bbox=(-0.05, 0.05, 51.45, 51.55), nx=5, ny=5)
        grid = relation_heatmap(relation(0.0, 180.0, sd=(1e3, 1e3)), spec, spec.center)
        assert grid.values.max() / grid.values.min() < 1.5

    @pytest.mark.parametrize("known", [(0.0, 51.5), (0.33, 51.21), (-0.9, 51.97)])
    def test_normalised(self, known):
        model = GmmModel([0.4, 0.6], [[5, 90], [8, 200]], [np.diag([4.0, 200.0]), np.diag([1.0, 50.0])])
        grid = relation_heatmap(model, SPEC, GeoPoint(*known))
        assert grid.values.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(grid.values >= 0)

    def test_coincident_cell_takes_neighbour_mean(self):
        spec = GridSpec(bbox=(-0.05, 0.05, 51.45, 51.55), nx=5, ny=5)
        model = relation(2.0, 45.0, sd=(3.0, 90.0))
        lm = log_cell_masses(model, spec, spec.center)
        ring = np.delete(lm[1:4, 1:4].ravel(), 4)
        assert lm[2, 2] == pytest.approx(math.log(np.mean(np.exp(ring))), rel=1e-12)

    def test_area_weighting_cancels_on_uniform_cells(self):
        model = relation(10.0, 90.0, sd=(5.0, 40.0))
        lm = log_cell_masses(model, SPEC, SPEC.center)
        grid = relation_heatmap(model, SPEC, SPEC.center)
        v = np.exp(lm - lm.max())
        assert grid.values == pytest.approx(v / v.sum(), rel=1e-12)


class TestInfer:
    def test_single_observation_is_heatmap(self):
        model = relation(6.0, 30.0, sd=(2.0, 20.0))
        a = infer_location([Observation(SPEC.center, model)], SPEC)
        b = relation_heatmap(model, SPEC, SPEC.center)
        assert np.array_equal(a.values, b.values)

    def test_triangulation(self):
        target = SPEC.cell_center(20, 27)
        k1 = offset(SPEC, 0.0, -10.0, origin=target)
        k2 = offset(SPEC, -10.0, 0.0, origin=target)
        obs = [Observation(k1, relation(10.0, 90.0)), Observation(k2, relation(10.0, 0.0))]
        assert infer_location(obs, SPEC).argmax() == (20, 27)

    def test_order_invariant(self):
        rng = np.random.default_rng(0)
        obs = []
        for i in range(4):
            known = SPEC.cell_center(*rng.integers(5, 45, 2))
            obs.append(Observation(known, relation(rng.uniform(3, 15), rng.uniform(0, 360), sd=(3.0, 30.0))))
        ref = infer_location(obs, SPEC).values
        for perm in ([3, 2, 1, 0], [1, 3, 0, 2]):
            again = infer_location([obs[i] for i in perm], SPEC).values
            np.testing.assert_allclose(again, ref, rtol=0, atol=1e-12)

    def test_duplicate_sharpens(self):
        obs = Observation(SPEC.center, relation(10.0, 90.0, sd=(4.0, 30.0)))
        one = infer_location([obs], SPEC)
        two = infer_location([obs, obs], SPEC)
        assert two.argmax() == one.argmax()
        assert two.values.max() > one.values.max()

    def test_infeasible(self):
        dead = GmmModel([1.0], [[1e160, 0.0]], [np.eye(2) * 1e-300])
        obs = [Observation(SPEC.center, relation(10.0, 90.0)), Observation(SPEC.center, dead)]
        with pytest.raises(InfeasibleFusionError) as err:
            infer_location(obs, SPEC)
        assert err.value.observation == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            infer_location([], SPEC)

    def test_top_cells(self):
        grid = relation_heatmap(relation(10.0, 90.0), SPEC, SPEC.center)
        top = grid.top_cells(3)
        assert len(top) == 3
        assert top[0][2] == grid.values.max()
        assert SPEC.cell_of(GeoPoint(top[0][0], top[0][1])) == grid.argmax()
        assert top[0][2] >= top[1][2] >= top[2][2]

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            ProbabilityGrid(SPEC, np.ones((2, 2)))


@pytest.fixture(scope="module")
def data():
    return clusters(np.random.default_rng(1), THREE_CENTERS, 60)


class TestSweep:
    def test_shape_and_baseline(self, data):
        rows = sweep_components(data, [1, 2, 3], 2, GreedyConfig(), kl_samples=2000)
        assert [r.cap for r in rows] == [1, 2, 3]
        assert rows[0].mean_kl_to_baseline == pytest.approx(0.0, abs=1e-12)
        assert rows[0].mean_components == 1.0
        lls = [r.mean_log_likelihood for r in rows]
        assert lls == sorted(lls)
        assert all(len(r.log_likelihoods) == 2 for r in rows)

    def test_workers_agree(self, data):
        a = sweep_components(data, [2, 3], 2, GreedyConfig(), kl_samples=500)
        b = sweep_components(data, [2, 3], 2, GreedyConfig(), kl_samples=500, workers=3)
        assert a == b

    def test_validation(self, data):
        with pytest.raises(ValueError):
            sweep_components(data, [1], 0)

    def test_derive_seed(self):
        assert derive_seed(42, 3, 0) == derive_seed(42, 3, 0)
        assert derive_seed(42, 3, 0) != derive_seed(42, 3, 1)
