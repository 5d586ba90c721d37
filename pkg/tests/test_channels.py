import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kathleen.autodiff import Tensor, float64, ops
from kathleen.autodiff.gradcheck import check_gradients, numerical_grad, relative_error
from kathleen.channels import Consonance, Dissonance, Reverb, Sequencer, epm, epm_weights
from kathleen.channels.reverb import reverb_scan, scan_chunked, scan_sequential
from kathleen.config import ConfigError, ModelConfig
from kathleen.model import KathleenModel, parameter_report
from kathleen.nn import make_rng

LENGTHS = [1, 15, 16, 17, 64, 256]


def _rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


def _scan_inputs(rng, length, dtype, batch=2, d=8):
    a = rng.uniform(0.5, 0.999, size=(batch, length, d)).astype(dtype)
    b = rng.standard_normal((batch, length, d)).astype(dtype)
    return a, b


class TestScan:
    @pytest.mark.parametrize("length", LENGTHS)
    def test_chunked_matches_sequential_32bit(self, length):
        a, b = _scan_inputs(np.random.default_rng(length), length, np.float32)
        oracle = scan_sequential(a.astype(np.float64), b.astype(np.float64))
        assert _rel(scan_chunked(a, b, chunk=16), oracle) < 1e-5

    @pytest.mark.parametrize("length", LENGTHS)
    def test_chunked_matches_sequential_64bit(self, length):
        a, b = _scan_inputs(np.random.default_rng(length), length, np.float64)
        assert _rel(scan_chunked(a, b, chunk=16), scan_sequential(a, b)) < 1e-10

    def test_worst_case_decay_over_full_chunk(self):
        a = np.full((1, 16, 4), 0.5)
        b = np.random.default_rng(0).standard_normal((1, 16, 4))
        assert np.exp(np.log(a).sum(axis=1)).min() == pytest.approx(0.5**16)
        assert _rel(scan_chunked(a.astype(np.float32), b.astype(np.float32)), scan_sequential(a, b)) < 1e-4

    def test_pure_decay_from_carry(self):
        a = np.full((1, 40, 1), 0.999)
        s = scan_chunked(a, np.zeros_like(a), carry=np.ones((1, 1)))
        np.testing.assert_allclose(s[0, :, 0], 0.999 ** np.arange(1, 41), rtol=1e-12)

    def test_decay_outside_unit_interval_is_error(self):
        with pytest.raises(ValueError):
            scan_chunked(np.full((1, 4, 1), 1.5), np.zeros((1, 4, 1)))
        with pytest.raises(ValueError):
            scan_chunked(np.zeros((1, 4, 1)), np.zeros((1, 4, 1)))

    def test_constant_gate_closed_form(self):
        gamma, v = 0.8, 2.5
        t = np.arange(1, 33)
        with float64():
            s = reverb_scan(Tensor(np.full((1, 32, 1), gamma)), Tensor(np.full((1, 32, 1), v)), chunk=16)
        np.testing.assert_allclose(s.data[0, :, 0], (1 - gamma**t) * v, rtol=1e-12)

    @pytest.mark.parametrize("length,chunk", [(1, 4), (7, 4), (16, 4), (19, 16)])
    def test_custom_adjoint_matches_finite_differences(self, length, chunk):
        rng = np.random.default_rng(length)
        a, b = _scan_inputs(rng, length, np.float64, d=3)
        with float64():
            errs = check_gradients(lambda g, v: reverb_scan(g, v, chunk), [a, b], rng)
        assert max(errs) < 1e-6


class TestReverb:
    def _reverb(self, d=6, l_max=32, **kw):
        with float64():
            r = Reverb(make_rng(0), d, l_max=l_max, chunk=4, **kw)
            r.w_out.data = np.random.default_rng(0).standard_normal((d, d))
        return r

    def test_zero_position_bias_equals_content_only_gate(self):
        r = self._reverb()
        h = Tensor(np.random.default_rng(1).standard_normal((2, 10, 6)))
        assert r(h).data.tobytes() == r(h, use_position=False).data.tobytes()

    def test_large_position_bias_saturates_gate(self):
        r = self._reverb()
        r.alpha_pos.data[:] = 30.0
        h = Tensor(np.zeros((1, 10, 6)))
        assert np.all(r.gamma_max - r.gates(h).data < 1e-3)

    def test_position_bias_starts_at_zero(self):
        r = Reverb(make_rng(0), 4, l_max=256)
        assert r.alpha_pos.size == 256 and np.all(r.alpha_pos.data == 0)

    def test_causal(self):
        r = self._reverb()
        rng = np.random.default_rng(2)
        h = rng.standard_normal((1, 12, 6))
        before = r(Tensor(h)).data
        h[0, 7] += 5.0
        after = r(Tensor(h)).data
        np.testing.assert_array_equal(before[0, :7], after[0, :7])
        assert np.abs(before[0, 7:] - after[0, 7:]).max() > 1e-3

    def test_padding_carries_state_unchanged(self):
        r = self._reverb()
        h = np.random.default_rng(3).standard_normal((1, 8, 6))
        mask = np.array([[True] * 5 + [False] * 3])
        s = r.state(Tensor(h), mask).data
        for t in range(5, 8):
            np.testing.assert_array_equal(s[0, t], s[0, 4])

    def test_too_long_without_extension_is_config_error(self):
        r = self._reverb(l_max=8)
        with pytest.raises(ConfigError):
            r(Tensor(np.zeros((1, 9, 6))))

    def test_zero_extension_past_l_max(self):
        r = self._reverb(l_max=8, extend_positions=True)
        r.alpha_pos.data[:] = 1.0
        bias = r.positional_bias(12).data
        np.testing.assert_array_equal(bias, [1.0] * 8 + [0.0] * 4)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (2, 5, 6), elements=st.floats(-1e4, 1e4)))
    def test_gate_strictly_inside_bounds(self, h):
        r = self._reverb()
        r.alpha_pos.data = np.random.default_rng(0).standard_normal(32)
        g = r.gates(Tensor(h)).data
        assert g.min() >= r.gamma_min and g.max() <= r.gamma_max

    def test_gate_bounds_over_many_random_inputs(self):
        r = Reverb(make_rng(1), 16, l_max=64)
        rng = np.random.default_rng(1)
        g = r.gates(Tensor(rng.standard_normal((1000, 8, 16)).astype(np.float32) * 3)).data
        assert 0.5 < g.min() and g.max() < 0.999

    def test_gradient(self):
        rng = np.random.default_rng(4)
        with float64():
            r = self._reverb(d=3, l_max=9)
            r.alpha_pos.data = rng.standard_normal(9)
            mask = np.array([[True] * 9, [True] * 6 + [False] * 3])

            def f(h, w_in, w_gate, alpha):
                r.w_in, r.w_gate, r.alpha_pos = w_in, w_gate, alpha
                return r(h, mask)

            errs = check_gradients(
                f,
                [rng.standard_normal((2, 9, 3)), r.w_in.data, r.w_gate.data, r.alpha_pos.data],
                rng,
            )
        assert max(errs) < 1e-3


class TestPsi:
    def test_consonance_gated_off_at_init(self):
        c = Consonance(make_rng(0), 4)
        assert np.all(c(Tensor(np.random.default_rng(0).standard_normal((2, 3, 4)))).data == 0)

    def test_consonance_zero_is_fixed_point(self):
        c = Consonance(make_rng(0), 4)
        assert np.all(c.field(Tensor(np.zeros((1, 3, 4)))).data == 0)

    def test_consonance_matches_direct_recursion(self):
        rng = np.random.default_rng(1)
        with float64():
            c = Consonance(make_rng(1), 5, iters=4, coupling=0.3, scale=1.0)
            c.eps.data = np.array(0.7)
            x = rng.standard_normal((2, 3, 5))
            a, b = x, x @ c.adapter.data
            psi = np.zeros_like(x)
            for _ in range(4):
                psi = np.tanh((a + 0.3 * psi) * (b + 0.3 * psi) / 1.0)
            np.testing.assert_allclose(c(Tensor(x)).data, 0.7 * psi, rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 4, 3), elements=st.floats(-100, 100)))
    def test_consonance_field_bounded(self, x):
        c = Consonance(make_rng(2), 3)
        assert np.abs(c.field(Tensor(x)).data).max() <= 1.0

    def test_dissonance_identity_adapter(self):
        d = Dissonance(make_rng(0), 4)
        d.adapter.data = np.eye(4, dtype=d.adapter.dtype)
        d.eps.data = np.array(0.5, dtype=d.eps.dtype)
        x = np.random.default_rng(0).standard_normal((1, 3, 4)).astype(np.float32)
        np.testing.assert_allclose(d(Tensor(x)).data, x, rtol=1e-6)

    def test_dissonance_ungated_is_adapter(self):
        d = Dissonance(make_rng(0), 4)
        x = np.random.default_rng(0).standard_normal((1, 3, 4)).astype(np.float32)
        np.testing.assert_allclose(d(Tensor(x)).data, x @ d.adapter.data, rtol=1e-6)

    def test_dissonance_saturates(self):
        d = Dissonance(make_rng(0), 2)
        d.adapter.data = np.zeros((2, 2), dtype=d.adapter.dtype)
        d.eps.data = np.array(0.25, dtype=d.eps.dtype)
        out = d(Tensor(np.full((1, 1, 2), 1e3, dtype=np.float32))).data
        np.testing.assert_allclose(out, 0.25, rtol=1e-6)

    def test_gradients(self):
        rng = np.random.default_rng(5)
        with float64():
            c = Consonance(make_rng(5), 3)
            c.eps.data = np.array(0.9)
            d = Dissonance(make_rng(6), 3)
            d.eps.data = np.array(0.9)
            errs = check_gradients(lambda x: c(x) + d(x), [rng.standard_normal((2, 4, 3))], rng)
        assert max(errs) < 1e-3


class TestMixing:
    def test_identical_signals(self):
        z = np.random.default_rng(0).standard_normal((2, 3, 4))
        with float64():
            out, w = epm([Tensor(z), Tensor(z)])
        np.testing.assert_allclose(out.data, z, rtol=1e-5)
        np.testing.assert_allclose(w, 0.5, rtol=1e-5)

    def test_zero_signal_gets_zero_weight(self):
        z = np.random.default_rng(1).standard_normal((2, 3, 4))
        eps = 1e-6
        with float64():
            out, w = epm([Tensor(z), Tensor(np.zeros_like(z))], eps)
        energy = np.abs(z).mean(axis=-1, keepdims=True)
        np.testing.assert_allclose(out.data, z * energy / (energy + eps), rtol=1e-12)
        assert np.all(w[1] == 0)

    def test_weight_is_held_constant_in_gradient(self):
        rng = np.random.default_rng(2)
        z1, z2 = rng.standard_normal((2, 1, 3, 4))
        eps = 1e-6
        with float64():
            theta = Tensor(np.array(1.7), requires_grad=True)
            out, w = epm([theta * Tensor(z1), Tensor(z2)], eps)
            ops.sum(out).backward()
        hand = np.sum(w[0] * z1)
        assert theta.grad == pytest.approx(hand, rel=1e-12)

        def full(th):
            e1 = np.abs(th * z1).mean(-1, keepdims=True)
            e2 = np.abs(z2).mean(-1, keepdims=True)
            return float(np.sum((e1 * th * z1 + e2 * z2) / (e1 + e2 + eps)))

        arr = np.array(1.7)
        no_detach = numerical_grad(lambda: full(float(arr)), arr)
        assert relative_error(np.array(theta.grad), no_detach) > 1e-3

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, (3, 2, 4, 5), elements=st.floats(-1e3, 1e3)),
        st.floats(1e-9, 1e-3),
    )
    def test_weights_nonnegative_and_sum_at_most_one(self, signals, eps):
        w = epm_weights(signals, eps)
        assert np.all(w >= 0)
        assert np.all(w.sum(axis=0) <= 1 + 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 3, 4), elements=st.floats(-10, 10)), st.permutations([0, 1, 2]))
    def test_equal_energy_inputs_permutation_invariant(self, z, perm):
        signals = np.stack([z, -z, z[..., ::-1]])  # equal mean |z|
        w = epm_weights(signals, 1e-6)
        np.testing.assert_allclose(epm_weights(signals[list(perm)], 1e-6), w[list(perm)])
        np.testing.assert_allclose(w[0], w[1])


class TestSequencer:
    def _h(self, d=16, length=12, seed=0):
        return Tensor(np.random.default_rng(seed).standard_normal((2, length, d)).astype(np.float32))

    def test_identity_at_init(self):
        seq = Sequencer(make_rng(0), ModelConfig(d=16))
        h = self._h()
        for mode in (True, False):
            seq.train(mode)
            seq.dropout_rng = make_rng(1)
            assert np.abs(seq(h, np.ones((2, 12), bool)).data - h.data).max() < 1e-6

    def test_reverb_only_adds_reverb(self):
        cfg = ModelConfig(d=16, use_conv=False, use_consonance=False, use_dissonance=False, dropout=0.0)
        with float64():
            seq = Sequencer(make_rng(0), cfg)
            seq.reverb.w_out.data = np.random.default_rng(0).standard_normal((16, 16)) * 0.1
            seq.eps_diag.data = np.ones(16)
            h = Tensor(np.random.default_rng(1).standard_normal((2, 12, 16)))
            mask = np.ones((2, 12), bool)
            r = seq.reverb(h, mask).data
            energy = np.abs(r).mean(axis=-1, keepdims=True)
            expected = h.data + r * energy / (energy + cfg.epm_eps)
            np.testing.assert_allclose(seq(h, mask).data, expected, rtol=1e-12, atol=1e-14)
            assert np.abs(seq(h, mask).data - (h.data + r)).max() < 1e-4

    @pytest.mark.parametrize(
        "toggle,prefix",
        [
            ("use_reverb", "sequencer.reverb"),
            ("use_conv", "sequencer.conv"),
            ("use_consonance", "sequencer.consonance"),
            ("use_dissonance", "sequencer.dissonance"),
        ],
    )
    def test_channel_toggles_match_accounting(self, toggle, prefix):
        cfg = ModelConfig(d=16, l_max=16)
        full = KathleenModel(cfg)
        reduced = KathleenModel(dataclasses.replace(cfg, **{toggle: False}))
        channel = sum(p.size for n, p in full.named_parameters() if n.startswith(prefix + "."))
        assert channel > 0
        assert parameter_report(full)["total"] - parameter_report(reduced)["total"] == channel
        assert reduced.num_parameters() == sum(p.size for p in reduced.parameters())

    def test_all_channels_off_is_config_error(self):
        with pytest.raises(ConfigError):
            ModelConfig(use_reverb=False, use_conv=False, use_consonance=False, use_dissonance=False)
