import numpy as np
import pytest

import literal
from smgaa import model as M
from smgaa import ops
from smgaa.errors import ConfigError
from smgaa.features import FRAMES_PER_DURATION
from smgaa.gradcheck import check_gradients, check_gradients_report
from smgaa.layers import Conv2d, Linear, count_flops_ctx
from smgaa.tensor import Tensor, no_grad

from oracles import conv2d_loops

CFG = M.ModelConfig()


def rng_input(shape, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


def zero_params(module):
    for p in module.parameters():
        p.data[...] = 0.0
    for name, p in module.named_parameters().items():
        if name.endswith("gamma"):
            p.data[...] = 1.0


# ----------------------------------------------------------------- config
def test_config_validation():
    with pytest.raises(ConfigError):
        M.ModelConfig(stem_channels=4)
    with pytest.raises(ConfigError):
        M.ModelConfig(stem_channels=17)
    with pytest.raises(ConfigError):
        M.ModelConfig(mgaa_bands=(4, 4))
    with pytest.raises(ConfigError):
        M.ModelConfig(placement="middle")


def test_stage_pool_targets():
    assert CFG.stage_pool_targets(60) == (20, 30, 20)
    assert CFG.stage_pool_targets(15) == (5, 8, 5)


def test_config_text_round_trip():
    cfg = M.ModelConfig(stem_channels=24, use_fcem=False, placement="deep")
    from smgaa.config import read_sections

    assert M.ModelConfig.from_section(read_sections(cfg.to_text())["model"]) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        M.ModelConfig.from_section({"bogus": "1"})


# ------------------------------------------------------------------- PCEM
def test_pd_range_and_shape():
    m = M.PCEM(16, CFG, np.random.default_rng(0))
    out = m.pd(rng_input((2, 16, 60, 16)))
    assert out.shape == (2, 16, 60, 16)
    assert np.all((out.data > 0) & (out.data < 1))


def test_pd_zero_weights_half():
    m = M.PCEM(16, CFG, np.random.default_rng(0))
    zero_params(m)
    np.testing.assert_array_equal(m.pd(rng_input((2, 16, 8, 5))).data, 0.5)


def test_ca_gate_properties():
    m = M.PCEM(16, CFG, np.random.default_rng(1))
    assert m.ca.reduce.weight.shape == (2, 16, 1, 1)
    x = rng_input((2, 16, 12, 7), 3)
    gate = m.ca(x).data
    assert gate.shape == (2, 16, 1, 1)
    assert np.all((gate > 0) & (gate < 1))
    rng = np.random.default_rng(5)
    perm = x.data.reshape(2, 16, -1)[:, :, rng.permutation(12 * 7)].reshape(x.shape)
    np.testing.assert_allclose(m.ca(Tensor(perm)).data, gate, atol=1e-14, rtol=0)
    with pytest.raises(ConfigError):
        M.ChannelAmplifier(4, CFG, np.random.default_rng(0))


@pytest.mark.parametrize("t", [16, 32, 47, 63])
def test_tfc_shape(t):
    m = M.PCEM(16, CFG, np.random.default_rng(0))
    assert m.tfc(rng_input((2, 16, 60, t))).shape == (2, 16, 60, t)


def test_tfc_zero_input_zero_prenorm():
    m = M.PCEM(8, CFG, np.random.default_rng(0))
    x = Tensor(np.zeros((1, 8, 5, 4)))
    assert not m.tfc.v_f(m.tfc.v_t(x)).data.any()


def test_tfc_matches_single_pass_oracle():
    rng = np.random.default_rng(2)
    m = M.PCEM(8, CFG, rng)
    x = rng.standard_normal((2, 8, 6, 5))
    # the factorised pair collapses to one 3x3 kernel
    wt, wf = m.tfc.v_t.weight.data, m.tfc.v_f.weight.data
    k = np.einsum("omj,mci->ocij", wf[:, :, 0, :], wt[:, :, :, 0])
    pre = conv2d_loops(x, k, padding=(1, 1, 1, 1))
    composed = m.tfc.v_f(m.tfc.v_t(Tensor(x))).data
    np.testing.assert_allclose(composed, pre, atol=1e-10, rtol=0)


def test_pcem_gate_identity(monkeypatch):
    m = M.PCEM(16, CFG, np.random.default_rng(3))
    z = rng_input((2, 16, 12, 6), 4)
    monkeypatch.setattr(m, "pixel_gate", lambda x: Tensor(np.ones(x.shape)))
    monkeypatch.setattr(m, "channel_gate", lambda x: Tensor(np.ones((x.shape[0], x.shape[1], 1, 1))))
    expected = m.mix(z + m.tfc(z)).data
    np.testing.assert_allclose(m(z).data, expected, atol=1e-12, rtol=0)


def test_pcem_shape():
    m = M.PCEM(16, CFG, np.random.default_rng(0))
    assert m(rng_input((2, 16, 60, 32))).shape == (2, 16, 60, 32)


def test_pcem_matches_literal_transcription():
    m = M.PCEM(16, CFG, np.random.default_rng(7))
    z = np.random.default_rng(8).standard_normal((2, 16, 12, 6))
    np.testing.assert_allclose(m(Tensor(z)).data, literal.pcem(m, z), atol=1e-10, rtol=0)


def test_pcem_gradients():
    m = M.PCEM(8, CFG, np.random.default_rng(9))
    z = rng_input((2, 8, 6, 4), 10)
    probe = rng_input((2, 8, 6, 4), 11)
    errs = check_gradients(lambda: (m(z) * probe).sum(), m.named_parameters())
    assert max(errs.values()) <= 1e-4, errs


# ------------------------------------------------------------------- MGAA
def test_mgaa_zero_weights_residual():
    m = M.MGAA(16, 60, 4, CFG, np.random.default_rng(0))
    zero_params(m)
    z = rng_input((2, 16, 60, 16))
    np.testing.assert_allclose(m(z).data, z.data + 0.5 * z.data, rtol=0, atol=0)


@pytest.mark.parametrize("c,f,bands,t", [(16, 60, 4, 16), (16, 60, 4, 63), (128, 15, 3, 4), (128, 15, 3, 16)])
def test_mgaa_shape(c, f, bands, t):
    m = M.MGAA(c, f, bands, CFG, np.random.default_rng(0))
    assert m(rng_input((1, c, f, t))).shape == (1, c, f, t)


def test_mgaa_band_locality():
    m = M.MGAA(16, 60, 4, CFG, np.random.default_rng(1))
    z = np.random.default_rng(2).standard_normal((1, 16, 60, 8))
    before = [g.data for g in m.band_gates(Tensor(z))]
    z2 = z.copy()
    z2[:, :, 15:30] += 1.0
    after = [g.data for g in m.band_gates(Tensor(z2))]
    changed = [not np.array_equal(a, b) for a, b in zip(before, after)]
    assert changed == [False, True, False, False]
    for g in after:
        assert np.all((g > 0) & (g < 1))


def test_mgaa_rejects_bad_band_count():
    with pytest.raises(ConfigError):
        M.MGAA(16, 15, 4, CFG, np.random.default_rng(0))


# ------------------------------------------------------------------- FCEM
def test_mfa_branch_geometry():
    b = M.MFABranch(16, 20, CFG, np.random.default_rng(0))
    assert b.conv.padding == (10, 9, 0, 0)
    out = b(rng_input((2, 16, 60, 16)))
    assert out.shape == (2, 8, 60, 16)
    assert not b.conv(Tensor(np.zeros((1, 16, 60, 4)))).data.any()


def test_mfa_pool_properties():
    const = Tensor(np.full((1, 3, 60, 5), 2.5))
    for target, mode in zip((20, 30, 20), ("max", "max", "avg")):
        out = M.mfa_pool(const, target, mode)
        assert out.shape == const.shape
        np.testing.assert_allclose(out.data, 2.5, atol=1e-12)
    x = rng_input((2, 4, 60, 5))
    mx = ops.adaptive_pool(x, 20, "max").data
    av = ops.adaptive_pool(x, 20, "avg").data
    assert np.all(mx >= av)


def test_fcem_concat_and_attention():
    m = M.FCEM(16, 60, CFG, np.random.default_rng(0))
    assert m.concat_channels == 3 * 8 + 3 * 16 == 72
    d = rng_input((2, 16, 60, 16))
    a = m.attention(d).data
    assert np.all((a > 0) & (a < 1))
    assert m(d).shape == d.shape


def test_fcem_matches_literal_transcription():
    m = M.FCEM(16, 60, CFG, np.random.default_rng(4))
    d = np.random.default_rng(5).standard_normal((2, 16, 60, 5))
    np.testing.assert_allclose(m(Tensor(d)).data, literal.fcem(m, d), atol=1e-10, rtol=0)


def test_fcem_gradients():
    m = M.FCEM(8, 12, CFG, np.random.default_rng(6))
    d = rng_input((2, 8, 12, 3), 7)
    probe = rng_input((2, 8, 12, 3), 8)
    errs = check_gradients(lambda: (m(d) * probe).sum(), m.named_parameters())
    assert max(errs.values()) <= 1e-4, errs


# ------------------------------------------------------------ S-MGAA block
def test_block_shape_and_determinism():
    blk = M.SMGAABlock(16, 60, 4, CFG, np.random.default_rng(0)).eval()
    z = rng_input((2, 16, 60, 16))
    a, b = blk(z).data, blk(z).data
    assert a.shape == (2, 16, 60, 16)
    assert a.tobytes() == b.tobytes()


def test_block_without_fcem_differs():
    rng_state = 11
    full = M.SMGAABlock(16, 60, 4, CFG, np.random.default_rng(rng_state))
    z = rng_input((2, 16, 60, 8))
    out_full = full(z).data
    full.fcem = None
    assert not np.allclose(full(z).data, out_full)


# ------------------------------------------------------------------- CFEB
def test_cfeb_geometry():
    c1 = M.CFEB(16, 64, CFG, np.random.default_rng(0))
    c2 = M.CFEB(64, 128, CFG, np.random.default_rng(0))
    h = c1(rng_input((2, 16, 60, 16)))
    assert h.shape == (2, 64, 30, 8)
    assert c2(h).shape == (2, 128, 15, 4)
    with pytest.raises(ConfigError):
        c1(rng_input((1, 16, 15, 4)))


def test_cfeb_constant_interior():
    c1 = M.CFEB(4, 8, CFG, np.random.default_rng(0))
    pre = c1.conv(Tensor(np.full((1, 4, 10, 10), 1.7))).data
    interior = pre[:, :, 1:-1, 1:-1]
    np.testing.assert_allclose(interior, interior[:, :, :1, :1] * np.ones_like(interior), atol=1e-12)


# ------------------------------------------------------------ full model
@pytest.mark.parametrize("duration", [0.5, 1.0, 1.5, 2.0])
def test_full_forward_shape(duration):
    t = FRAMES_PER_DURATION[duration]
    net = M.SMGAANet(CFG, t).eval()
    with no_grad():
        logits = net(np.random.default_rng(0).standard_normal((4, 1, 60, t)))
    assert logits.shape == (4, 2)
    assert np.all(np.isfinite(logits.data))


def test_stage_shapes_all_durations():
    for t in FRAMES_PER_DURATION.values():
        (c1, f1, t1), (c2, f2, t2) = CFG.stage_geometry(t)
        for c, f, tt, bands in ((c1, f1, t1, 4), (c2, f2, t2, 3)):
            blk = M.SMGAABlock(c, f, bands, CFG, np.random.default_rng(0))
            assert blk(rng_input((2, c, f, tt))).shape == (2, c, f, tt)


def test_scores_are_log_posteriors():
    net = M.SMGAANet(CFG, 16).eval()
    s = net.scores(np.random.default_rng(0).standard_normal((3, 1, 60, 16)))
    assert s.shape == (3,) and np.all(s <= 0)


def test_wrong_geometry():
    net = M.SMGAANet(CFG, 16)
    with pytest.raises(ConfigError):
        net(np.zeros((1, 1, 60, 32)))


def test_ablation_variants_build_and_run():
    variants = [
        dict(use_mgaa=False),
        dict(use_pcem=False),
        dict(use_fcem=False),
        dict(placement="shallow"),
        dict(placement="deep"),
        dict(),
    ]
    sizes = []
    for v in variants:
        net = M.SMGAANet(M.ModelConfig(**v), 16)
        assert net(np.zeros((2, 1, 60, 16))).shape == (2, 2)
        sizes.append(M.count_params(net))
    assert sizes[-1] == max(sizes)
    assert len(set(sizes)) == len(sizes)


# ------------------------------------------------------------ accounting
def test_flops_formula_instances():
    conv = Conv2d(6, 6, 1)
    with count_flops_ctx() as log:
        conv(Tensor(np.zeros((3, 6, 5, 7))))
    assert log == [("conv", 2 * 6 * 6 * 5 * 7)]
    lin = Linear(10, 3)
    assert M.count_params(lin) == 33
    with count_flops_ctx() as log:
        lin(Tensor(np.zeros((4, 10))))
    assert log == [("linear", 60)]


# Regression constants for the default configuration.
EXPECTED_PARAMS = {16: 702524, 32: 717884, 47: 733244, 63: 748604}
EXPECTED_FLOPS = {0.5: 139932288, 1.0: 279831168, 1.5: 417516288, 2.0: 557415168}


def test_param_and_flop_regression():
    for t, expected in EXPECTED_PARAMS.items():
        assert M.count_params(M.SMGAANet(CFG, t)) == expected
    flops = [M.count_flops(CFG, d) for d in (0.5, 1.0, 1.5, 2.0)]
    assert flops == [EXPECTED_FLOPS[d] for d in (0.5, 1.0, 1.5, 2.0)]
    assert flops == sorted(flops) and len(set(flops)) == 4


def test_checkpoint_round_trip(tmp_path):
    net = M.SMGAANet(M.ModelConfig(stem_channels=8, cfeb_channels=(16, 16)), 16, seed=3)
    net.stage1.pcem.pd.bn.running_mean[:] = 0.25
    path = tmp_path / "m.ckpt"
    M.save_model(path, net, {"duration": 0.5})
    loaded, meta = M.load_model(path)
    assert meta["duration"] == "0.5"
    assert loaded.cfg == net.cfg
    x = np.random.default_rng(0).standard_normal((2, 1, 60, 16))
    net.eval()
    with no_grad():
        assert net(x).data.tobytes() == loaded(x).data.tobytes()


def test_full_network_gradients_reduced():
    net = M.SMGAANet(M.REDUCED_CONFIG, 6, seed=1)
    x = rng_input((2, 1, 12, 6), 2)
    labels = np.array([0, 1])
    report = check_gradients_report(
        lambda: ops.cross_entropy(net(x), labels), net.named_parameters(), max_entries=12
    )
    assert set(report.errors) == set(net.named_parameters())
    name, err = report.worst
    assert err <= 1e-4, (name, err)
    assert sum(report.kinks.values()) <= 0.1 * sum(report.probed.values())
