"""Algebra of the NIG summation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evimat.fusion import fuse_fold, fuse_fold_params, fuse_map_pair, fuse_pair
from evimat.nig import NIGMap, NIGParams

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
pos = st.floats(min_value=1e-3, max_value=50.0, allow_nan=False)
shape = st.floats(min_value=1.01, max_value=50.0, allow_nan=False)


def params_strategy():
    return st.builds(NIGParams, gamma=unit, omega=pos, alpha=shape, beta=pos)


class TestFusePair:
    def test_symmetric_case(self):
        p = NIGParams(0.5, 1.0, 2.0, 1.0)
        f = fuse_pair(p, p)
        assert (f.gamma, f.omega, f.alpha, f.beta) == (0.5, 2.0, 4.5, 2.0)

    def test_hand_evaluated_case(self):
        f = fuse_pair(NIGParams(0.0, 1.0, 2.0, 1.0), NIGParams(1.0, 3.0, 2.0, 1.0))
        assert f.gamma == pytest.approx(0.75, abs=0)
        assert f.omega == 4.0
        assert f.alpha == 4.5
        # beta: 1 + 1 + 0.5*1*(0.75)^2 + 0.5*3*(0.25)^2 = 2.375
        assert f.beta == pytest.approx(2.375, abs=0)

    @settings(max_examples=300, deadline=None)
    @given(params_strategy(), params_strategy())
    def test_commutativity_exact(self, a, b):
        ab = fuse_pair(a, b)
        ba = fuse_pair(b, a)
        assert (ab.gamma, ab.omega, ab.alpha, ab.beta) == (
            ba.gamma,
            ba.omega,
            ba.alpha,
            ba.beta,
        )

    @settings(max_examples=300, deadline=None)
    @given(params_strategy(), params_strategy())
    def test_mean_is_convex_combination(self, a, b):
        f = fuse_pair(a, b)
        lo, hi = min(a.gamma, b.gamma), max(a.gamma, b.gamma)
        assert lo - 1e-12 <= f.gamma <= hi + 1e-12

    @settings(max_examples=300, deadline=None)
    @given(params_strategy(), params_strategy())
    def test_evidence_accumulates(self, a, b):
        f = fuse_pair(a, b)
        assert f.omega > a.omega and f.omega > b.omega
        assert f.alpha > a.alpha and f.alpha > b.alpha
        assert f.beta >= a.beta + b.beta

    def test_heavier_opinion_pulls_mean(self):
        light = NIGParams(0.1, 0.5, 2.0, 1.0)
        heavy = NIGParams(0.9, 5.0, 2.0, 1.0)
        f = fuse_pair(light, heavy)
        assert abs(f.gamma - heavy.gamma) < abs(f.gamma - light.gamma)


class TestAssociativity:
    def test_random_triples(self):
        rng = np.random.default_rng(5)
        n = 10_000
        trips = []
        for _ in range(3):
            trips.append(
                (
                    rng.uniform(0, 1, n),
                    rng.uniform(1e-3, 10, n),
                    rng.uniform(1.01, 10, n),
                    rng.uniform(1e-3, 10, n),
                )
            )
        worst = 0.0
        for i in range(n):
            a, b, c = (
                NIGParams(t[0][i], t[1][i], t[2][i], t[3][i]) for t in trips
            )
            left = fuse_pair(fuse_pair(a, b), c)
            right = fuse_pair(a, fuse_pair(b, c))
            for la, ra in zip(
                (left.gamma, left.omega, left.alpha, left.beta),
                (right.gamma, right.omega, right.alpha, right.beta),
            ):
                worst = max(worst, abs(la - ra) / max(1.0, abs(ra)))
        assert worst < 1e-9


class TestFuseFold:
    def _map(self, g, w, a, b, shape=(3, 4)):
        mk = lambda v: np.full(shape, v, dtype=np.float32)
        return NIGMap(mk(g), mk(w), mk(a), mk(b))

    def test_singleton_identity(self):
        m = self._map(0.3, 1.0, 2.0, 1.0)
        out = fuse_fold([m])
        assert out is m

    def test_three_copies_closed_form(self):
        m = self._map(0.3, 1.5, 2.0, 0.5)
        out = fuse_fold([m, m, m])
        np.testing.assert_allclose(out.gamma, 0.3, atol=1e-7)
        np.testing.assert_allclose(out.omega, 4.5, atol=1e-6)
        np.testing.assert_allclose(out.alpha, 3 * 2.0 + 1.0, atol=1e-6)
        np.testing.assert_allclose(out.beta, 1.5, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fuse_map_pair(self._map(0.5, 1, 2, 1), self._map(0.5, 1, 2, 1, shape=(2, 2)))

    def test_empty_fold(self):
        with pytest.raises(ValueError):
            fuse_fold([])
        with pytest.raises(ValueError):
            fuse_fold_params([])

    def test_fold_matches_scalar_path(self):
        rng = np.random.default_rng(9)
        maps = []
        scalars = []
        for _ in range(4):
            g, w = rng.uniform(0, 1), rng.uniform(0.5, 3)
            a, b = rng.uniform(1.5, 4), rng.uniform(0.5, 3)
            maps.append(self._map(g, w, a, b, shape=(2, 2)))
            scalars.append(NIGParams(g, w, a, b))
        fold = fuse_fold(maps)
        ref = fuse_fold_params(scalars)
        assert fold.gamma[0, 0] == pytest.approx(ref.gamma, rel=1e-6)
        assert fold.omega[0, 0] == pytest.approx(ref.omega, rel=1e-6)
        assert fold.alpha[0, 0] == pytest.approx(ref.alpha, rel=1e-6)
        assert fold.beta[0, 0] == pytest.approx(ref.beta, rel=1e-6)
