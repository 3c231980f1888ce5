"""Reproduction-event geometry, sampling strategies and serialization."""

import math

import numpy as np
import pytest
from scipy import stats

from slfvsim.errors import BudgetError, ParameterError
from slfvsim.events import (
    NEUTRAL,
    SELECTIVE,
    EventStream,
    ReproductionEvent,
    event_rate_in_window,
    iter_events_box,
    merged_cover,
    next_event_hitting,
    sample_events_box,
    sample_parents,
    write_event_csv,
)
from slfvsim.params import ModelParams, RadiusMeasure, per_point_event_rate


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestReproductionEvent:
    def test_neutral_event(self):
        ev = ReproductionEvent(1.0, 0.0, 0.5, NEUTRAL, 0.2)
        assert ev.interval == (-0.5, 0.5)
        assert ev.covers(-0.5) and ev.covers(0.5)
        assert not ev.covers(0.5 + 1e-12)
        assert ev.z2 is None

    def test_selective_event_orders_parents(self):
        ev = ReproductionEvent(1.0, 0.0, 0.5, SELECTIVE, -0.2, 0.3)
        assert ev.z1 < ev.z2

    def test_rejects_malformed(self):
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, 0.5, NEUTRAL, 0.2, 0.3)  # stray z2
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, 0.5, SELECTIVE, 0.2)  # missing z2
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, 0.5, SELECTIVE, 0.3, 0.2)  # unordered
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, 0.5, NEUTRAL, 0.6)  # parent outside
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, -0.5, NEUTRAL, 0.0)  # bad radius
        with pytest.raises(ParameterError):
            ReproductionEvent(1.0, 0.0, 0.5, "other", 0.0)

    def test_stream_requires_increasing_times(self):
        e1 = ReproductionEvent(1.0, 0.0, 0.5, NEUTRAL, 0.0)
        e2 = ReproductionEvent(1.0, 0.0, 0.5, NEUTRAL, 0.1)
        with pytest.raises(ParameterError):
            EventStream([e1, e2], (-1.0, 1.0), (0.0, 2.0))


class TestSampleParents:
    def test_neutral_parent_uniform(self):
        rng = _rng(1)
        zs = np.array([sample_parents(NEUTRAL, 2.0, 0.5, rng)[0]
                       for _ in range(4000)])
        assert np.all(zs > 1.5) and np.all(zs < 2.5)
        _, p = stats.kstest(zs, stats.uniform(loc=1.5, scale=1.0).cdf)
        assert p > 1e-4

    def test_selective_parents_are_order_statistics(self):
        rng = _rng(2)
        pairs = np.array([sample_parents(SELECTIVE, 0.0, 0.5, rng)
                          for _ in range(4000)])
        z1, z2 = pairs[:, 0], pairs[:, 1]
        assert np.all(z1 < z2)
        assert np.all(z1 > -0.5) and np.all(z2 < 0.5)
        # min and max of two independent uniforms on (-1/2, 1/2)
        assert np.mean(z1) == pytest.approx(-1.0 / 6.0, abs=0.02)
        assert np.mean(z2) == pytest.approx(1.0 / 6.0, abs=0.02)


class TestBoxSampling:
    def test_count_matches_intensity(self):
        params = ModelParams(n=100, alpha=1.0, seed=0)
        rng = _rng(3)
        space, time = (0.0, 1.0), (0.0, 0.5)
        stream = sample_events_box(params, space, time, rng)
        lam = event_rate_in_window(params, space) * 0.5
        z = (len(stream.events) - lam) / math.sqrt(lam)
        assert abs(z) < 4.0

    def test_times_sorted_and_ids_sequential(self):
        params = ModelParams(n=100, alpha=1.0)
        stream = sample_events_box(params, (0.0, 1.0), (0.0, 0.2), _rng(4))
        ts = [ev.t for ev in stream]
        assert all(a < b for a, b in zip(ts, ts[1:]))
        assert [ev.id for ev in stream] == list(range(len(ts)))

    def test_centres_uniform_on_enlarged_window(self):
        params = ModelParams(n=100, alpha=0.0, seed=0)
        rho = params.max_rescaled_radius
        stream = sample_events_box(params, (0.0, 1.0), (0.0, 1.0), _rng(5))
        xs = np.array([ev.x for ev in stream])
        assert xs.min() >= -rho and xs.max() <= 1.0 + rho
        _, p = stats.kstest(xs, stats.uniform(loc=-rho, scale=1 + 2 * rho).cdf)
        assert p > 1e-4

    def test_kind_split_matches_selection_probability(self):
        params = ModelParams(n=100, alpha=2.0, seed=0)  # s_n = 0.2
        stream = sample_events_box(params, (0.0, 2.0), (0.0, 1.0), _rng(6))
        kinds = np.array([ev.kind == SELECTIVE for ev in stream])
        se = math.sqrt(0.2 * 0.8 / len(kinds))
        assert np.mean(kinds) == pytest.approx(0.2, abs=5 * se)

    def test_two_atom_radius_frequencies(self):
        mu = RadiusMeasure.from_atoms([(0.75, 1.0), (0.25, 2.0)])
        params = ModelParams(n=400, alpha=0.0, mu=mu)
        stream = sample_events_box(params, (0.0, 1.0), (0.0, 0.1), _rng(7))
        rhos = np.array([ev.rho for ev in stream])
        small = np.mean(rhos == 1.0 / 20.0)
        # weight per atom is proportional to w_i * (width + 2 rho_i)
        w1 = 0.75 * (1.0 + 2 * 0.05)
        w2 = 0.25 * (1.0 + 2 * 0.10)
        expect = w1 / (w1 + w2)
        se = math.sqrt(expect * (1 - expect) / len(rhos))
        assert small == pytest.approx(expect, abs=5 * se)

    def test_budget_refusal(self):
        params = ModelParams(n=10_000, alpha=0.0)
        with pytest.raises(BudgetError) as err:
            sample_events_box(params, (0.0, 100.0), (0.0, 100.0), _rng(8),
                              budget=1000)
        assert err.value.count > 1000

    def test_deterministic_given_stream_state(self):
        params = ModelParams(n=100, alpha=1.0)
        s1 = sample_events_box(params, (0.0, 1.0), (0.0, 0.2), _rng(9))
        s2 = sample_events_box(params, (0.0, 1.0), (0.0, 0.2), _rng(9))
        assert [(e.t, e.x, e.rho, e.kind, e.z1, e.z2) for e in s1] == \
               [(e.t, e.x, e.rho, e.kind, e.z1, e.z2) for e in s2]

    def test_iter_events_box_increases_across_chunks(self):
        params = ModelParams(n=100, alpha=1.0)
        it = iter_events_box(params, (0.0, 0.5), _rng(10), chunk=0.05)
        ts = [next(it).t for _ in range(400)]
        assert all(a < b for a, b in zip(ts, ts[1:]))
        assert ts[-1] > 0.1  # spans several chunks


class TestRates:
    def test_point_rate_is_zero_width_window_rate(self):
        mu = RadiusMeasure.from_atoms([(0.5, 1.0), (0.5, 3.0)])
        params = ModelParams(n=256, alpha=0.0, mu=mu)
        assert event_rate_in_window(params, (2.0, 2.0)) == pytest.approx(
            per_point_event_rate(params.n, mu))

    def test_window_rate_grows_linearly(self):
        params = ModelParams(n=100, alpha=0.0)
        r0 = event_rate_in_window(params, (0.0, 0.0))
        r1 = event_rate_in_window(params, (0.0, 1.0))
        density = params.n * params.sqrt_n
        assert r1 - r0 == pytest.approx(density)


class TestMergedCover:
    def test_hand_case(self):
        segs = merged_cover([0.0, 0.5, 3.0], 0.5)
        assert segs == [(-0.5, 1.0), (2.5, 3.5)]

    def test_against_grid_union(self):
        rng = _rng(11)
        for _ in range(25):
            pts = rng.uniform(-2, 2, size=rng.integers(1, 8))
            h = float(rng.uniform(0.05, 0.8))
            segs = merged_cover(pts, h)
            length = sum(b - a for a, b in segs)
            grid = np.linspace(-3.0, 3.0, 120_001)
            covered = np.zeros(len(grid), dtype=bool)
            for p in pts:
                covered |= (grid >= p - h) & (grid <= p + h)
            approx = covered.mean() * 6.0
            assert length == pytest.approx(approx, abs=2e-4)
            for (a, b), (c, d) in zip(segs, segs[1:]):
                assert b < c  # disjoint and sorted

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            merged_cover([], 0.5)


class TestHittingStrategy:
    def test_event_always_covers_a_position(self):
        params = ModelParams(n=100, alpha=1.0)
        rng = _rng(12)
        positions = [0.0, 0.4, -1.3]
        for _ in range(500):
            ev = next_event_hitting(params, positions, 0.0, rng)
            assert any(ev.covers(p) for p in positions)
            assert ev.t > 0.0

    def test_single_point_waiting_time_is_exponential(self):
        params = ModelParams(n=100, alpha=0.0)
        rng = _rng(13)
        waits = np.array([
            next_event_hitting(params, [0.0], 0.0, rng).t
            for _ in range(3000)
        ])
        rate = per_point_event_rate(params.n, params.mu)
        _, p = stats.kstest(waits, stats.expon(scale=1.0 / rate).cdf)
        assert p > 1e-4

    def test_agrees_with_box_first_cover(self):
        params = ModelParams(n=64, alpha=0.5, seed=0)
        rho = params.max_rescaled_radius
        rng = _rng(14)
        box_waits = []
        while len(box_waits) < 1500:
            stream = sample_events_box(
                params, (-rho, rho), (0.0, 4.0), rng)
            for ev in stream:
                if ev.covers(0.0):
                    box_waits.append(ev.t)
                    break
        hit_waits = [next_event_hitting(params, [0.0], 0.0, rng).t
                     for _ in range(1500)]
        _, p = stats.ks_2samp(box_waits, hit_waits)
        assert p > 1e-4

    def test_two_cluster_rate_uses_union_length(self):
        # two far-apart points double the union, two coincident do not
        params = ModelParams(n=100, alpha=0.0)
        rng = _rng(15)
        far = np.array([next_event_hitting(params, [0.0, 10.0], 0.0, rng).t
                        for _ in range(2000)])
        near = np.array([next_event_hitting(params, [0.0, 0.0], 0.0, rng).t
                         for _ in range(2000)])
        assert np.mean(near) / np.mean(far) == pytest.approx(2.0, rel=0.15)


class TestCsvDump:
    def test_golden_dump(self, tmp_path):
        events = [
            ReproductionEvent(0.25, 0.0, 0.5, NEUTRAL, 0.125, id=0),
            ReproductionEvent(0.5, 1.0, 0.5, SELECTIVE, 0.75, 1.25, id=1),
        ]
        stream = EventStream(events, (-1.0, 2.0), (0.0, 1.0))
        path = tmp_path / "events.csv"
        write_event_csv(stream, path)
        assert path.read_bytes() == (
            b"t,x,rho,kind,z1,z2\r\n"
            b"0.25,0.0,0.5,neutral,0.125,\r\n"
            b"0.5,1.0,0.5,selective,0.75,1.25\r\n"
        )
