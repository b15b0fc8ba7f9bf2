"""U-Net generator and patch discriminator.

Both networks are built as a flat list of numbered rows so that a shape trace
can be read off layer by layer. At width scale 1 and 256x256 input the
generator has 17 rows and the discriminator 7.

Tensors are NCHW inside the networks; traces report (H, W, C).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import torch
from torch import nn

INIT_STD = 0.02
LEAKY_SLOPE = 0.2
DROPOUT_RATE = 0.5


class SpecError(ValueError):
    pass


def _as_fraction(x) -> Fraction:
    return Fraction(x).limit_denominator(1 << 16) if isinstance(x, float) else Fraction(x)


def _scaled(width: int, scale: Fraction, what: str) -> int:
    w = width * scale
    if w.denominator != 1 or w < 1:
        raise SpecError(f"{what}: width {width} x scale {scale} is not a positive integer")
    return int(w)


@dataclass(frozen=True)
class GeneratorSpec:
    resolution: int = 256
    input_channels: int = 4
    output_channels: int = 3
    base_width: int = 64
    width_scale: Fraction = Fraction(1)
    depth: int | None = None  # encoder stages; defaults to log2(resolution)
    max_multiplier: int = 8
    dropout_rows: int = 3
    dropout: bool = True

    def __post_init__(self):
        object.__setattr__(self, "width_scale", _as_fraction(self.width_scale))
        if self.width_scale <= 0 or self.width_scale > 1:
            raise SpecError(f"width_scale must lie in (0, 1], got {self.width_scale}")
        if self.resolution < 2 or self.resolution & (self.resolution - 1):
            raise SpecError(f"resolution must be a power of two >= 2, got {self.resolution}")
        if self.depth is None:
            object.__setattr__(self, "depth", int(math.log2(self.resolution)))
        if self.depth < 2:
            raise SpecError("generator needs at least two encoder stages")
        if self.resolution != 2**self.depth:
            raise SpecError(
                f"resolution {self.resolution} does not reduce to a 1x1 bottleneck "
                f"after {self.depth} stride-2 stages"
            )
        self.encoder_widths  # validates integrality

    @property
    def encoder_widths(self) -> list[int]:
        return [
            _scaled(self.base_width * min(2**i, self.max_multiplier), self.width_scale, f"encoder row {i + 1}")
            for i in range(self.depth)
        ]

    @property
    def n_rows(self) -> int:
        return 2 * self.depth + 1

    def skip_target(self, k: int) -> int:
        """Decoder row that receives encoder row ``k`` (1-based)."""
        return self.n_rows - k

    def to_dict(self) -> dict:
        d = asdict(self)
        d["width_scale"] = str(self.width_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        d["width_scale"] = Fraction(d["width_scale"])
        return cls(**d)


@dataclass(frozen=True)
class DiscriminatorSpec:
    resolution: int = 256
    input_channels: int = 7
    base_width: int = 64
    width_scale: Fraction = Fraction(1)
    n_downsample: int = 3
    max_multiplier: int = 8

    def __post_init__(self):
        object.__setattr__(self, "width_scale", _as_fraction(self.width_scale))
        if self.width_scale <= 0 or self.width_scale > 1:
            raise SpecError(f"width_scale must lie in (0, 1], got {self.width_scale}")
        if self.n_downsample < 1:
            raise SpecError("discriminator needs at least one stride-2 stage")
        side = self.resolution
        for _ in range(self.n_downsample):
            side //= 2
        # pad(1) -> conv4 -> pad(1) -> conv4 must leave at least one cell
        if side + 2 - 3 + 2 - 3 < 1:
            raise SpecError(
                f"resolution {self.resolution} too small for {self.n_downsample} downsampling stages"
            )
        self.widths

    @property
    def widths(self) -> list[int]:
        return [
            _scaled(self.base_width * min(2**i, self.max_multiplier), self.width_scale, f"disc row {i + 1}")
            for i in range(self.n_downsample + 1)
        ]

    @property
    def n_rows(self) -> int:
        return self.n_downsample + 4

    def to_dict(self) -> dict:
        d = asdict(self)
        d["width_scale"] = str(self.width_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorSpec":
        d = dict(d)
        d["width_scale"] = Fraction(d["width_scale"])
        return cls(**d)


class SeededDropout(nn.Module):
    """Dropout drawing its mask from a generator owned by the network.

    Active when the module is training or ``force`` is set; ``enabled=False``
    switches it off entirely.
    """

    def __init__(self, p: float, rng: torch.Generator):
        super().__init__()
        self.p = p
        self.rng = rng
        self.force = False
        self.enabled = True

    def forward(self, x):
        if not self.enabled or not (self.training or self.force):
            return x
        keep = torch.empty(x.shape, dtype=x.dtype).bernoulli_(1.0 - self.p, generator=self.rng)
        return x * keep / (1.0 - self.p)


def _conv_block(cin, cout, norm=True):
    layers = [nn.Conv2d(cin, cout, 4, 2, 1, bias=not norm)]
    if norm:
        layers.append(nn.BatchNorm2d(cout))
    layers.append(nn.LeakyReLU(LEAKY_SLOPE))
    return nn.Sequential(*layers)


class UNetGenerator(nn.Module):
    """Encoder rows 1..d, decoder rows d+1..2d, output row 2d+1.

    Row d+1 works at the 1x1 bottleneck (kernel 4, stride 2, padding 2,
    output padding 1 keeps a single cell) and doubles the channel count.
    Rows d+2..2d upsample and concatenate the mirrored encoder activation.
    BatchNorm is omitted on rows whose output is 1x1.
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.rng = torch.Generator()
        self.rng.manual_seed(0)
        enc = spec.encoder_widths
        d = spec.depth
        rows = []
        cin = spec.input_channels
        for i, w in enumerate(enc):
            rows.append(_conv_block(cin, w, norm=i < d - 1))
            cin = w

        n_drop = spec.dropout_rows

        def up(cin, cout, row_pos, bottleneck=False):
            if bottleneck:
                layers = [nn.ConvTranspose2d(cin, cout, 4, 2, 2, output_padding=1, bias=True)]
            else:
                layers = [nn.ConvTranspose2d(cin, cout, 4, 2, 1, bias=False), nn.BatchNorm2d(cout)]
            layers.append(nn.ReLU())
            if row_pos < n_drop:
                layers.append(SeededDropout(DROPOUT_RATE, self.rng))
            return nn.Sequential(*layers)

        rows.append(up(enc[-1], 2 * enc[-1], 0, bottleneck=True))
        cin = 2 * enc[-1]
        for pos, k in enumerate(range(d - 1, 0, -1), start=1):
            w = enc[k - 1]
            rows.append(up(cin, w, pos))
            cin = 2 * w
        rows.append(nn.Sequential(nn.ConvTranspose2d(cin, spec.output_channels, 4, 2, 1), nn.Tanh()))
        self.rows = nn.ModuleList(rows)
        if not spec.dropout:
            self.set_dropout(enabled=False)

    def dropout_layers(self):
        return [m for m in self.modules() if isinstance(m, SeededDropout)]

    def set_dropout(self, enabled: bool | None = None, force: bool | None = None):
        for m in self.dropout_layers():
            if enabled is not None:
                m.enabled = enabled
            if force is not None:
                m.force = force

    def row_kinds(self) -> list[str]:
        d = self.spec.depth
        kinds = ["C"] * d
        for row in self.rows[d:-1]:
            kinds.append("CTD" if any(isinstance(m, SeededDropout) for m in row) else "CT")
        kinds.append("tanh")
        return kinds

    def run_rows(self, x, zero_skips=()):
        """Forward pass returning every row's output.

        ``zero_skips`` lists encoder rows (1-based) whose skip contribution is
        replaced by zeros at the concatenation.
        """
        d = self.spec.depth
        outs = []
        h = x
        for i in range(d):
            h = self.rows[i](h)
            outs.append(h)
        h = self.rows[d](h)
        outs.append(h)
        for pos, k in enumerate(range(d - 1, 0, -1), start=1):
            h = self.rows[d + pos](h)
            skip = outs[k - 1]
            if k in zero_skips:
                skip = torch.zeros_like(skip)
            h = torch.cat([h, skip], dim=1)
            outs.append(h)
        outs.append(self.rows[-1](h))
        return outs

    def forward(self, x):
        return self.run_rows(x)[-1]


class PatchDiscriminator(nn.Module):
    """Stride-2 conv rows, zero pad, stride-1 conv, norm/act/pad, 1-channel conv."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        widths = spec.widths
        rows = []
        cin = spec.input_channels
        for w in widths[:-1]:
            rows.append(_conv_block(cin, w))
            cin = w
        rows.append(nn.ZeroPad2d(1))
        rows.append(nn.Conv2d(cin, widths[-1], 4, 1, 0, bias=False))
        rows.append(nn.Sequential(nn.BatchNorm2d(widths[-1]), nn.LeakyReLU(LEAKY_SLOPE), nn.ZeroPad2d(1)))
        rows.append(nn.Conv2d(widths[-1], 1, 4, 1, 0))
        self.rows = nn.ModuleList(rows)

    def run_rows(self, x):
        outs = []
        for row in self.rows:
            x = row(x)
            outs.append(x)
        return outs

    def forward(self, x):
        return self.run_rows(x)[-1]


def init_weights(net: nn.Module, seed: int) -> nn.Module:
    """Gaussian init: conv weights N(0, 0.02), norm scales N(1, 0.02), biases 0."""
    g = torch.Generator()
    g.manual_seed(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    for m in net.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, INIT_STD, generator=g)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, INIT_STD, generator=g)
            nn.init.zeros_(m.bias)
    return net


def build_generator(spec: GeneratorSpec = GeneratorSpec(), init_seed: int = 0) -> UNetGenerator:
    with torch.no_grad():
        return init_weights(UNetGenerator(spec), init_seed)


def build_discriminator(spec: DiscriminatorSpec = DiscriminatorSpec(), init_seed: int = 1) -> PatchDiscriminator:
    with torch.no_grad():
        return init_weights(PatchDiscriminator(spec), init_seed)


def _hwc(t: torch.Tensor) -> tuple[int, int, int]:
    return (t.shape[2], t.shape[3], t.shape[1])


def shape_trace(net: nn.Module, resolution: int | None = None) -> list[tuple[int, int, int]]:
    """Per-row output shapes (H, W, C) for a single sample.

    Runs on the meta device, so no arithmetic is performed.
    """
    spec = net.spec
    res = resolution or spec.resolution
    x = torch.empty(1, spec.input_channels, res, res, device="meta")
    meta = _meta_copy(net)
    was_training = meta.training
    meta.eval()
    outs = meta.run_rows(x)
    meta.train(was_training)
    return [_hwc(o) for o in outs]


def _meta_copy(net: nn.Module) -> nn.Module:
    cls = type(net)
    with torch.device("meta"):
        return cls(net.spec)


def expected_generator_trace(spec: GeneratorSpec) -> list[tuple[int, int, int]]:
    """Shape calculus for the generator, independent of the torch modules."""
    enc = spec.encoder_widths
    side = spec.resolution
    rows = []
    for w in enc:
        side //= 2
        rows.append((side, side, w))
    rows.append((1, 1, 2 * enc[-1]))
    for k in range(spec.depth - 1, 0, -1):
        side *= 2
        rows.append((side, side, 2 * enc[k - 1]))
    rows.append((side * 2, side * 2, spec.output_channels))
    return rows


def expected_discriminator_trace(spec: DiscriminatorSpec) -> list[tuple[int, int, int]]:
    widths = spec.widths
    side = spec.resolution
    rows = []
    for w in widths[:-1]:
        side //= 2
        rows.append((side, side, w))
    side += 2
    rows.append((side, side, widths[-2]))
    side -= 3
    rows.append((side, side, widths[-1]))
    side += 2
    rows.append((side, side, widths[-1]))
    side -= 3
    rows.append((side, side, 1))
    return rows
