"""S-MGAA detector: stem, two S-MGAA stages around two CFEBs, linear classifier.

An S-MGAA block runs PCEM (pixel/channel gating plus time-frequency
coupling), a multi-band gating attention, and FCEM (multi-scale frequency
branches fused and gated by a frequency-axis depthwise attention map).  All
blocks preserve the B x C x F x T shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .config import dump_sections, from_section, read_sections
from .errors import ConfigError
from .features import FRAMES_PER_DURATION, N_CEPS
from .layers import BatchNorm2d, Conv2d, Linear, Module, count_flops_ctx
from .serialize import load_checkpoint, save_checkpoint
from .tensor import Tensor, add, concat, flatten, gelu, mul, no_grad, sigmoid

REFERENCE_F = 60
PLACEMENTS = ("both", "shallow", "deep")


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 16
    cfeb_channels: tuple = (64, 128)
    kappa: int = 8
    kappa2: int = 2
    k_list: tuple = (20, 15, 10)
    pool_targets: tuple = (20, 30, 20)
    afi_kernel: int = 7
    mgaa_bands: tuple = (4, 3)
    mgaa_reduction: int = 8
    input_f: int = N_CEPS
    n_classes: int = 2
    use_pcem: bool = True
    use_mgaa: bool = True
    use_fcem: bool = True
    placement: str = "both"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if len(self.cfeb_channels) != 2 or len(self.mgaa_bands) != 2:
            raise ConfigError("cfeb_channels and mgaa_bands need one entry per stage")
        if len(self.k_list) != 3 or len(self.pool_targets) != 3:
            raise ConfigError("k_list and pool_targets need three entries")
        if self.input_f % 4:
            raise ConfigError(f"input_f={self.input_f} must be divisible by 4 (two 2x frequency poolings)")
        for stage, (c, f) in enumerate(self.stage_channels_and_f(), start=1):
            if c % self.kappa2:
                raise ConfigError(f"stage {stage}: channels {c} not divisible by kappa2={self.kappa2}")
            if c < self.kappa:
                raise ConfigError(f"stage {stage}: channels {c} < kappa={self.kappa}")
            if c < self.mgaa_reduction:
                raise ConfigError(f"stage {stage}: channels {c} < mgaa_reduction={self.mgaa_reduction}")
            bands = self.mgaa_bands[stage - 1]
            if bands < 1 or f % bands:
                raise ConfigError(f"stage {stage}: F={f} not divisible by {bands} MGAA bands")
            for target in self.stage_pool_targets(f):
                if not 1 <= target <= f:
                    raise ConfigError(f"stage {stage}: pool target {target} outside 1..{f}")

    def stage_channels_and_f(self) -> list[tuple[int, int]]:
        return [(self.stem_channels, self.input_f), (self.cfeb_channels[1], self.input_f // 4)]

    def stage_pool_targets(self, f: int) -> tuple[int, ...]:
        """Pool targets scaled from the 60-bin reference: ceil(F * target / 60)."""
        return tuple(math.ceil(f * t / REFERENCE_F) for t in self.pool_targets)

    def stage_geometry(self, n_frames: int) -> list[tuple[int, int, int]]:
        t2 = math.ceil(math.ceil(n_frames / 2) / 2)
        (c1, f1), (c2, f2) = self.stage_channels_and_f()
        return [(c1, f1, n_frames), (c2, f2, t2)]

    def to_text(self) -> str:
        return dump_sections({"model": self})

    @classmethod
    def from_section(cls, section: dict[str, str]) -> "ModelConfig":
        return from_section(cls, section, "model")


REDUCED_CONFIG = ModelConfig(stem_channels=8, cfeb_channels=(16, 16), input_f=12, mgaa_bands=(4, 3), mgaa_reduction=4)


# ------------------------------------------------------------------ PCEM
class PixelDetector(Module):
    """sigmoid(pointwise(GELU(BN(depthwise3x3(z)))))"""

    def __init__(self, c: int, cfg: ModelConfig, rng):
        self.dw = Conv2d(c, c, (3, 3), groups=c, bias=False, rng=rng)
        self.bn = BatchNorm2d(c, cfg.bn_momentum, cfg.bn_eps)
        self.pw = Conv2d(c, c, 1, rng=rng)

    def forward(self, z):
        return sigmoid(self.pw(gelu(self.bn(self.dw(z)))))


class ChannelAmplifier(Module):
    """Squeeze-excite style gate, B x C x 1 x 1."""

    def __init__(self, c: int, cfg: ModelConfig, rng):
        if c < cfg.kappa:
            raise ConfigError(f"channel amplifier needs C >= kappa ({c} < {cfg.kappa})")
        self.reduce = Conv2d(c, c // cfg.kappa, 1, rng=rng)
        self.expand = Conv2d(c // cfg.kappa, c, 1, rng=rng)

    def forward(self, z):
        return sigmoid(self.expand(gelu(self.reduce(ops.global_avg_pool(z)))))


class TFCoupling(Module):
    """GELU(BN(conv1x3(conv3x1(z)))); the 3x1 kernel runs first."""

    def __init__(self, c: int, cfg: ModelConfig, rng):
        self.v_t = Conv2d(c, c, (3, 1), padding=(1, 1, 0, 0), bias=False, rng=rng)
        self.v_f = Conv2d(c, c, (1, 3), padding=(0, 0, 1, 1), bias=False, rng=rng)
        self.bn = BatchNorm2d(c, cfg.bn_momentum, cfg.bn_eps)

    def forward(self, z):
        return gelu(self.bn(self.v_f(self.v_t(z))))


class PCEM(Module):
    def __init__(self, c: int, cfg: ModelConfig, rng):
        self.pd = PixelDetector(c, cfg, rng)
        self.ca = ChannelAmplifier(c, cfg, rng)
        self.tfc = TFCoupling(c, cfg, rng)
        self.mix = Conv2d(c, c, 1, rng=rng)

    def pixel_gate(self, z):
        return self.pd(z)

    def channel_gate(self, z):
        return self.ca(z)

    def forward(self, z):
        gated = mul(mul(z, self.pixel_gate(z)), self.channel_gate(z))
        return self.mix(add(gated, self.tfc(z)))


# ------------------------------------------------------------------ MGAA
class BandGate(Module):
    def __init__(self, c: int, reduction: int, rng):
        self.reduce = Conv2d(c, c // reduction, 1, rng=rng)
        self.expand = Conv2d(c // reduction, c, 1, rng=rng)

    def forward(self, band):
        return sigmoid(self.expand(gelu(self.reduce(ops.global_avg_pool(band)))))


class MGAA(Module):
    """Stand-in multi-granularity attention.

    The frequency axis is split into equal contiguous bands; each band is
    scaled by its own channel gate computed from that band alone, and the
    result is added back to the input.
    """

    def __init__(self, c: int, f: int, bands: int, cfg: ModelConfig, rng):
        if f % bands:
            raise ConfigError(f"MGAA: F={f} not divisible by {bands} bands")
        self.bounds = ops.pool_bins(f, bands)
        self.gates = [BandGate(c, cfg.mgaa_reduction, rng) for _ in range(bands)]

    def band_gates(self, z) -> list[Tensor]:
        return [gate(ops.slice_f(z, s, e)) for gate, (s, e) in zip(self.gates, self.bounds)]

    def forward(self, z):
        if z.shape[2] != self.bounds[-1][1]:
            raise ConfigError(f"MGAA built for F={self.bounds[-1][1]}, got F={z.shape[2]}")
        scaled = [mul(ops.slice_f(z, s, e), g) for g, (s, e) in zip(self.band_gates(z), self.bounds)]
        return add(z, concat(scaled, axis=2))


# ------------------------------------------------------------------ FCEM
class MFABranch(Module):
    """GELU(BN(conv_(k,1)(d))), C -> C / kappa2, F preserved."""

    def __init__(self, c: int, k: int, cfg: ModelConfig, rng):
        if c % cfg.kappa2:
            raise ConfigError(f"MFA branch: C={c} not divisible by kappa2={cfg.kappa2}")
        self.conv = Conv2d(c, c // cfg.kappa2, (k, 1), padding=ops.same_padding(k, 1), bias=False, rng=rng)
        self.bn = BatchNorm2d(c // cfg.kappa2, cfg.bn_momentum, cfg.bn_eps)

    def forward(self, d):
        return gelu(self.bn(self.conv(d)))


def mfa_pool(d: Tensor, target: int, mode: str) -> Tensor:
    """Adaptive frequency pooling then linear resize back to the input F."""
    return ops.bilinear_resize_f(ops.adaptive_pool(d, target, mode), d.shape[2])


class FCEM(Module):
    POOL_MODES = ("max", "max", "avg")

    def __init__(self, c: int, f: int, cfg: ModelConfig, rng):
        self.branches = [MFABranch(c, k, cfg, rng) for k in cfg.k_list]
        self.targets = cfg.stage_pool_targets(f)
        self.concat_channels = len(cfg.k_list) * (c // cfg.kappa2) + len(self.targets) * c
        self.fuse = Conv2d(self.concat_channels, c, 1, bias=False, rng=rng)
        self.fuse_bn = BatchNorm2d(c, cfg.bn_momentum, cfg.bn_eps)
        k = cfg.afi_kernel
        self.afi = Conv2d(c, c, (k, 1), padding=ops.same_padding(k, 1), groups=c, rng=rng)

    def fused(self, d):
        parts = [b(d) for b in self.branches]
        parts += [mfa_pool(d, t, m) for t, m in zip(self.targets, self.POOL_MODES)]
        stacked = concat(parts, axis=1)
        if stacked.shape[1] != self.concat_channels:
            raise ConfigError(f"FCEM concat width {stacked.shape[1]} != {self.concat_channels}")
        return gelu(self.fuse_bn(self.fuse(stacked)))

    def attention(self, d):
        return sigmoid(self.afi(d))

    def forward(self, d):
        return mul(self.fused(d), self.attention(d))


# ------------------------------------------------------------ S-MGAA block
class SMGAABlock(Module):
    def __init__(self, c: int, f: int, bands: int, cfg: ModelConfig, rng):
        self.pcem = PCEM(c, cfg, rng) if cfg.use_pcem else None
        self.mgaa = MGAA(c, f, bands, cfg, rng) if cfg.use_mgaa else None
        self.fcem = FCEM(c, f, cfg, rng) if cfg.use_fcem else None

    def forward(self, z):
        for stage in (self.pcem, self.mgaa, self.fcem):
            if stage is not None:
                z = stage(z)
        return z


class CFEB(Module):
    """3x3 conv, BN, GELU, 2x2 max pool: C_in x F x T -> C_out x F/2 x ceil(T/2)."""

    def __init__(self, c_in: int, c_out: int, cfg: ModelConfig, rng):
        self.conv = Conv2d(c_in, c_out, (3, 3), padding=(1, 1, 1, 1), bias=False, rng=rng)
        self.bn = BatchNorm2d(c_out, cfg.bn_momentum, cfg.bn_eps)

    def forward(self, x):
        if x.shape[2] % 2:
            raise ConfigError(f"CFEB needs an even frequency extent, got F={x.shape[2]}")
        return ops.max_pool2d(gelu(self.bn(self.conv(x))))


class SMGAANet(Module):
    """Full detector for one input duration (the classifier width depends on T)."""

    def __init__(self, cfg: ModelConfig = ModelConfig(), n_frames: int = 16, seed: int = 0):
        self.cfg = cfg
        self.n_frames = n_frames
        rng = np.random.default_rng(seed)
        (c1, f1, _), (c2, f2, t2) = cfg.stage_geometry(n_frames)
        self.stem = Conv2d(1, cfg.stem_channels, 1, rng=rng)
        shallow = cfg.placement in ("both", "shallow")
        deep = cfg.placement in ("both", "deep")
        self.stage1 = SMGAABlock(c1, f1, cfg.mgaa_bands[0], cfg, rng) if shallow else None
        self.cfeb1 = CFEB(c1, cfg.cfeb_channels[0], cfg, rng)
        self.cfeb2 = CFEB(cfg.cfeb_channels[0], cfg.cfeb_channels[1], cfg, rng)
        self.stage2 = SMGAABlock(c2, f2, cfg.mgaa_bands[1], cfg, rng) if deep else None
        self.classifier = Linear(c2 * f2 * t2, cfg.n_classes, rng=rng)

    def features(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != self.cfg.input_f or x.shape[3] != self.n_frames:
            raise ConfigError(f"expected B x 1 x {self.cfg.input_f} x {self.n_frames} input, got {x.shape}")
        z = self.stem(x)
        if self.stage1 is not None:
            z = self.stage1(z)
        z = self.cfeb2(self.cfeb1(z))
        if self.stage2 is not None:
            z = self.stage2(z)
        return z

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return self.classifier(flatten(self.features(x)))

    def scores(self, x) -> np.ndarray:
        """Spoof-class log posterior per example (higher = more likely spoof)."""
        with no_grad():
            logits = self.forward(x).data
        return ops.log_softmax(logits)[:, 1]


# ------------------------------------------------------------- accounting
def count_params(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))


def count_flops(cfg: ModelConfig, duration_s: float | None = None, n_frames: int | None = None) -> int:
    """Per-utterance conv + linear FLOPs (2 per multiply-accumulate)."""
    if n_frames is None:
        n_frames = FRAMES_PER_DURATION[duration_s]
    net = SMGAANet(cfg, n_frames).eval()
    with no_grad(), count_flops_ctx() as log:
        net(np.zeros((1, 1, cfg.input_f, n_frames)))
    return sum(f for _, f in log)


# ------------------------------------------------------------- checkpoint
def save_model(path, model: SMGAANet, extra: dict | None = None) -> None:
    meta = {"n_frames": model.n_frames}
    meta.update(extra or {})
    text = dump_sections({"model": model.cfg, "checkpoint": meta})
    save_checkpoint(path, model.state_dict(), text)


def load_model(path) -> tuple[SMGAANet, dict[str, str]]:
    tensors, text = load_checkpoint(path)
    sections = read_sections(text)
    cfg = ModelConfig.from_section(sections.get("model", {}))
    meta = sections.get("checkpoint", {})
    model = SMGAANet(cfg, int(meta["n_frames"]))
    model.load_state_dict(tensors)
    return model.eval(), meta
