import math

import numpy as np
import pytest

from latent_tuning import tuner
from latent_tuning.beamsim import GeneratorConfig, generate_dataset, pca_shift_report
from latent_tuning.core import X_XP, Y_YP, Z_E, AxisPair, ImageGrid, ShapeError, mse
from latent_tuning.es import EsConfig
from latent_tuning.net import decode_batch, decode_vjp, encode, init_weights, inject_latent
from latent_tuning.tuner import (
    HIDDEN_PAIRS,
    MeasurementChannel,
    Snapshot,
    TrueSystem,
    TuningResult,
    TuningRun,
    adapt,
    cost_eval,
    dither_allowance,
    evaluate_hidden,
    make_scenario,
    make_stale_guess,
    no_shift_system,
    shift_scenarios,
)


@pytest.fixture(scope="module")
def gen8():
    return GeneratorConfig(input_size=8, output_size=8)


@pytest.fixture(scope="module")
def data8(gen8):
    return generate_dataset(30, seed=5, config=gen8)


@pytest.fixture(scope="module")
def guess8(data8):
    return make_stale_guess(data8)


@pytest.fixture(scope="module")
def weights8(tiny_spec):
    return init_weights(tiny_spec, seed=1)


def es_for(weights, **kw):
    opts = dict(alpha=0.02, k=20.0, dt=1.0, steps_per_period=50) | kw
    return EsConfig.for_dim(weights.spec.latent_dim, **opts)


class FixedChannel:
    """Measurement source that only offers ``measure``."""

    def __init__(self, image, fail_at=None):
        self.image = image
        self.fail_at = fail_at
        self.calls = []

    def measure(self, t):
        self.calls.append(t)
        if self.fail_at is not None and len(self.calls) > self.fail_at:
            return np.full(self.image.shape, np.nan)
        return self.image


def own_prediction(weights, guess, pair=Z_E):
    v = encode(guess.image, guess.params, weights)
    return decode_batch(v, weights)[0, weights.spec.axis_pairs.index(pair)]


# --- information barrier ------------------------------------------------------


def test_channel_exposes_only_measure(gen8, data8):
    ch = MeasurementChannel(TrueSystem(data8.knobs[0], data8.params[0], gen8))
    methods = {n for n in dir(ch) if not n.startswith("_") and callable(getattr(ch, n))}
    assert methods == {"measure"}
    assert {n for n in vars(ch) if not n.startswith("_")} == {"pair", "noise"}


def test_channel_returns_observable_projection(gen8, data8):
    sys = TrueSystem(data8.knobs[0], data8.params[0], gen8)
    img = MeasurementChannel(sys).measure(0.0)
    np.testing.assert_array_equal(img.pixels, data8.targets[0, gen8.pairs.index(Z_E)])


def test_channel_noise_is_seeded_and_nonnegative(gen8, data8):
    sys = TrueSystem(data8.knobs[0], data8.params[0], gen8)
    a = MeasurementChannel(sys, noise=0.5, seed=3).measure(0.0)
    b = MeasurementChannel(sys, noise=0.5, seed=3).measure(0.0)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    assert np.all(a.pixels >= 0)
    assert not np.array_equal(a.pixels, sys.projection(0.0, Z_E).pixels)


def test_adapt_needs_nothing_but_measure(weights8, guess8, monkeypatch):
    def forbidden(*a, **k):
        raise AssertionError("hidden evaluation reached from the control loop")

    monkeypatch.setattr(tuner, "evaluate_hidden", forbidden)
    ch = FixedChannel(ImageGrid(own_prediction(weights8, guess8) + 1e-4))
    res = adapt(TuningRun(weights8, guess8, es_for(weights8), steps=20), ch)
    assert len(ch.calls) == 20
    assert res.fault is None


# --- stale guess --------------------------------------------------------------


def test_stale_guess_of_one_record(data8):
    g = make_stale_guess(data8[0:1])
    np.testing.assert_allclose(g.image.pixels, data8.inputs[0] / data8.inputs[0].sum(), rtol=1e-14)
    np.testing.assert_array_equal(g.params.values, data8.params[0])


def test_stale_guess_of_mirror_images_is_symmetric(data8):
    sub = data8[0:1]
    mirrored = type(data8)(
        np.concatenate([sub.inputs, sub.inputs[:, :, ::-1]]),
        np.concatenate([sub.params, sub.params]),
        np.concatenate([sub.knobs, sub.knobs]),
        np.concatenate([sub.targets, sub.targets]),
        data8.config,
    )
    img = make_stale_guess(mirrored).image.pixels
    np.testing.assert_allclose(img, img[:, ::-1], rtol=0, atol=1e-16)


def test_stale_guess_params_match_two_pass_mean(data8):
    g = make_stale_guess(data8)
    p = data8.params
    first = [sum(col) / len(col) for col in p.T]
    two_pass = [m + sum(x - m for x in col) / len(col) for m, col in zip(first, p.T)]
    np.testing.assert_allclose(g.params.values, two_pass, rtol=0, atol=1e-12)
    assert g.image.pixels.sum() == pytest.approx(1.0)


def test_stale_guess_rejects_empty(data8):
    with pytest.raises(ValueError):
        make_stale_guess(data8[0:0])


# --- cost ---------------------------------------------------------------------


def test_cost_is_zero_for_own_prediction(weights8, guess8):
    m = own_prediction(weights8, guess8)
    assert cost_eval(weights8, guess8, np.zeros(3), m) == 0.0


def test_cost_matches_direct_mse(weights8, guess8):
    m = np.random.default_rng(0).random((8, 8)) * 1e-2
    v = np.array([0.3, -0.2, 0.1])
    p = inject_latent(encode(guess8.image, guess8.params, weights8), v)
    pred = decode_batch(p, weights8)[0, 2]
    assert cost_eval(weights8, guess8, v, m, scale=4.0) == pytest.approx(mse(pred, m) / 4.0, rel=1e-14)


def test_cost_gradient_matches_finite_differences(weights8, guess8):
    rng = np.random.default_rng(2)
    m = own_prediction(weights8, guess8) * (1 + 0.3 * rng.random((8, 8)))
    v = 0.2 * rng.standard_normal(3)
    p = inject_latent(encode(guess8.image, guess8.params, weights8), v)
    pred = decode_batch(p, weights8)[0]
    cot = np.zeros_like(pred)
    cot[2] = 2.0 * (pred[2] - m) / m.size
    grad = decode_vjp(p, weights8, cot)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (cost_eval(weights8, guess8, v + e, m) - cost_eval(weights8, guess8, v - e, m)) / (2 * h)
        assert fd == pytest.approx(grad[i], rel=1e-4, abs=1e-12)


def test_cost_shape_errors(weights8, guess8):
    with pytest.raises(ShapeError):
        cost_eval(weights8, guess8, np.zeros(3), np.zeros((4, 4)))
    with pytest.raises(ShapeError):
        cost_eval(weights8, guess8, np.zeros(3), np.zeros((8, 8)), pair=AxisPair("x", "y"))


# --- adaptation ---------------------------------------------------------------


def test_adapt_trajectory_length_and_time_order(weights8, guess8):
    ch = FixedChannel(ImageGrid(own_prediction(weights8, guess8) * 1.2))
    run = TuningRun(weights8, guess8, es_for(weights8), steps=120, snapshot_every=50)
    res = adapt(run, ch)
    assert len(res.t) == len(res.cost) == len(res.raw_cost) == 120
    assert res.v_control.shape == (120, 3)
    assert np.all(np.diff(res.t) > 0)
    assert [s.step for s in res.snapshots] == [0, 50, 100, 119]
    assert res.cost[0] == pytest.approx(1.0)
    np.testing.assert_allclose(res.raw_cost / res.cost_scale, res.cost, rtol=1e-12)
    assert res.final_prediction.shape == (3, 8, 8)


def test_adapt_never_changes_weights(weights8, guess8):
    before = weights8.checksum()
    adapt(TuningRun(weights8, guess8, es_for(weights8), steps=30),
          FixedChannel(ImageGrid(own_prediction(weights8, guess8) * 0.5)))
    assert weights8.checksum() == before


def test_adapt_stops_on_nonfinite_measurement(weights8, guess8):
    ch = FixedChannel(ImageGrid(own_prediction(weights8, guess8) * 1.1), fail_at=10)
    res = adapt(TuningRun(weights8, guess8, es_for(weights8), steps=50), ch)
    assert res.fault is not None and "measurement fault" in res.fault
    assert len(res.t) == 10
    assert np.all(np.isfinite(res.cost))


def test_adapt_reduces_observable_mismatch(weights8, guess8):
    # target: the network's own prediction at a known latent offset; the
    # untrained decoder is steep on one side, so the dither must stay small
    v_true = np.array([0.4, -0.3, 0.2])
    p = inject_latent(encode(guess8.image, guess8.params, weights8), v_true)
    target = decode_batch(p, weights8)[0, 2]
    es = es_for(weights8, alpha=5e-4, k=5.0)
    res = adapt(TuningRun(weights8, guess8, es, steps=3000), FixedChannel(ImageGrid(target)))
    assert res.tail_mean_cost() < 0.5


def test_zero_drift_source_stays_in_dither_neighborhood(weights8, guess8):
    es = es_for(weights8)
    res = adapt(TuningRun(weights8, guess8, es, steps=1000),
                FixedChannel(ImageGrid(own_prediction(weights8, guess8))))
    amp = np.sqrt(es.alpha / es.omegas)
    assert np.all(np.abs(res.v_control) <= 3.0 * amp)


def test_no_shift_source_sits_at_range_center(gen8, guess8):
    sys = no_shift_system(guess8, gen8)
    np.testing.assert_allclose(sys.knobs, gen8.knob_ranges.center)
    np.testing.assert_array_equal(sys.base_params.values, guess8.params.values)
    assert not sys.base_params.out_of_range


def test_dither_allowance_is_positive_and_seeded(weights8, guess8):
    m = own_prediction(weights8, guess8)
    es = es_for(weights8)
    a = dither_allowance(weights8, guess8, m, es)
    assert a > 0
    assert a == dither_allowance(weights8, guess8, m, es)


# --- hidden evaluation --------------------------------------------------------


def oracle_result(system, gen, dt, steps=(0, 50, 100), shift_t=0.0):
    pairs = tuple(gen.pairs)
    snaps = [Snapshot(s, s * dt + shift_t, np.zeros(3), system.projections(s * dt, pairs).stack())
             for s in steps]
    return TuningResult(t=np.array([]), cost=np.array([]), raw_cost=np.array([]),
                        v_control=np.zeros((0, 3)), v_latent=np.zeros(3), snapshots=snaps,
                        baseline=snaps[0].prediction * 2.0, pairs=pairs)


def test_perfect_prediction_scores_zero(gen8, data8):
    sys = TrueSystem(data8.knobs[1], data8.params[1], gen8)
    ev = evaluate_hidden(oracle_result(sys, gen8, 1.0), sys, HIDDEN_PAIRS, dt=1.0)
    for p in HIDDEN_PAIRS:
        np.testing.assert_array_equal(ev.tuned[p], 0.0)
        tuned, base = ev.final(p)
        assert tuned == 0.0 and base > 0.0
    np.testing.assert_array_equal(ev.steps, [0, 50, 100])


def test_timestamp_mismatch_raises(gen8, data8):
    sys = TrueSystem(data8.knobs[1], data8.params[1], gen8)
    with pytest.raises(ValueError, match="timestamp mismatch"):
        evaluate_hidden(oracle_result(sys, gen8, 1.0, shift_t=0.5), sys, HIDDEN_PAIRS, dt=1.0)


def test_hidden_pairs_are_transverse_phase_spaces():
    assert HIDDEN_PAIRS == (X_XP, Y_YP)
    assert Z_E not in HIDDEN_PAIRS


# --- shift scenarios ----------------------------------------------------------


def test_near_and_far_leave_training_ranges(gen8):
    near, far = shift_scenarios(gen8, n=200, seed=0)
    assert near.out_of_range().all()
    assert far.out_of_range().all()
    assert near.multiplier == 1.1 and far.multiplier == 1.5


def test_no_shift_scenario_stays_in_range(gen8):
    sc = make_scenario(gen8, "none", n=200, seed=0)
    assert not sc.out_of_range().any()


def test_scenarios_reproducible_from_seed(gen8):
    a = make_scenario(gen8, "near", n=50, seed=7)
    b = make_scenario(gen8, "near", n=50, seed=7)
    c = make_scenario(gen8, "near", n=50, seed=8)
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(a.knobs, b.knobs)
    assert not np.array_equal(a.params, c.params)


def test_scenario_jitter_box(gen8):
    sc = make_scenario(gen8, "far", n=500, seed=1, jitter=0.1)
    r = gen8.param_ranges
    lo = r.center + (1.5 - 0.1) * r.half_width
    hi = r.center + (1.5 + 0.1) * r.half_width
    assert np.all((sc.params >= lo) & (sc.params <= hi))


def test_unknown_scenario_rejected(gen8):
    with pytest.raises(ValueError, match="unknown scenario"):
        make_scenario(gen8, "mid")


def test_far_shift_overlaps_no_more_than_near(gen8):
    train = generate_dataset(200, seed=9, config=gen8).input_images()
    near, far = shift_scenarios(gen8, n=200, seed=0)
    ov_near = pca_shift_report(train, near.input_images(), 15).overlap[0]
    ov_far = pca_shift_report(train, far.input_images(), 15).overlap[0]
    assert ov_far <= ov_near
    ov_none = pca_shift_report(train, make_scenario(gen8, "none", n=200).input_images(), 15).overlap[0]
    assert ov_none > ov_near
    assert math.isfinite(ov_none)
