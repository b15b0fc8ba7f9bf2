"""Per-frame inference: refined dark channel -> 4-channel stack -> generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .dcprior import DarkChannelParams, GuidedFilterParams, prepare_input
from .imagecore import ImagePlane, ImageRgb, ImageStack4, resize_to
from .model import Mode, UNetGenerator, generator_forward, load_checkpoint, nchw_to_nhwc, nhwc_to_nchw


def preprocess_state(dcp: DarkChannelParams, gfp: GuidedFilterParams) -> dict:
    return {"kernel": dcp.kernel_size, "radius": gfp.radius, "eps": gfp.epsilon}


def preprocess_from_state(state: dict) -> tuple[DarkChannelParams, GuidedFilterParams]:
    pre = state.get("preprocess", {})
    dcp = DarkChannelParams(pre.get("kernel", DarkChannelParams().kernel_size))
    gfp = GuidedFilterParams(pre.get("radius", GuidedFilterParams().radius), pre.get("eps", GuidedFilterParams().epsilon))
    return dcp, gfp


@dataclass
class Desmoker:
    G: UNetGenerator
    dcp: DarkChannelParams = DarkChannelParams()
    gfp: GuidedFilterParams = GuidedFilterParams()
    mode: Mode = Mode.EVAL_DETERMINISTIC

    @classmethod
    def from_checkpoint(cls, path, dcp=None, gfp=None) -> "Desmoker":
        ckpt = load_checkpoint(path)
        c_dcp, c_gfp = preprocess_from_state(ckpt.state)
        return cls(ckpt.G, dcp or c_dcp, gfp or c_gfp)

    @property
    def resolution(self) -> int:
        return self.G.spec.resolution

    def fit(self, img: ImageRgb) -> ImageRgb:
        return resize_to(img, self.resolution, self.resolution)

    def prepare(self, img: ImageRgb) -> ImageStack4:
        return prepare_input(self.fit(img), self.dcp, self.gfp)

    def run_stacks(self, stacks: list[ImageStack4]) -> list[ImageRgb]:
        x = nhwc_to_nchw(np.stack([s.to_array() for s in stacks]))
        y = nchw_to_nhwc(generator_forward(self.G, x, self.mode))
        return [ImageRgb(np.clip(o, 0.0, 1.0)) for o in y]

    def restore(self, img: ImageRgb) -> ImageRgb:
        return self.run_stacks([self.prepare(img)])[0]

    def restore_many(self, imgs: list[ImageRgb]) -> list[ImageRgb]:
        return self.run_stacks([self.prepare(i) for i in imgs])


def scale_guide_thirds(stack: ImageStack4, factors) -> ImageStack4:
    """Multiply the guide's left, middle and right vertical thirds by ``factors``, clamped to [0, 1]."""
    g = stack.guide.data.astype(np.float64).copy()
    w = g.shape[1]
    edges = [0, w // 3, (2 * w) // 3, w]
    for k, f in enumerate(factors):
        g[:, edges[k] : edges[k + 1]] *= float(f)
    return ImageStack4(stack.rgb, ImagePlane(np.clip(g, 0.0, 1.0)))


def third_slices(width: int):
    edges = [0, width // 3, (2 * width) // 3, width]
    return [slice(edges[k], edges[k + 1]) for k in range(3)]


def probe_trend(model: Desmoker, images: list[ImageRgb], factors=(0.0, 1.0, 2.0)) -> list[float]:
    """Mean |output - input| inside the third whose guide was scaled by each factor.

    Every image is run under all three cyclic assignments of factors to
    thirds, so each factor is measured once in every position.
    """
    stacks = [model.prepare(img) for img in images]
    width = stacks[0].shape[1]
    parts = third_slices(width)
    sums = np.zeros(len(factors))
    counts = np.zeros(len(factors))
    for shift in range(3):
        layout = [factors[(k + shift) % 3] for k in range(3)]
        outs = model.run_stacks([scale_guide_thirds(s, layout) for s in stacks])
        for s, out in zip(stacks, outs):
            diff = np.abs(out.data.astype(np.float64) - s.rgb.data.astype(np.float64))
            for k in range(3):
                fi = (k + shift) % 3
                sums[fi] += diff[:, parts[k]].mean()
                counts[fi] += 1
    return list(sums / counts)


def side_by_side(images: list[ImageRgb]) -> ImageRgb:
    return ImageRgb(np.concatenate([i.data for i in images], axis=1))


def timed_pipeline(model: Desmoker, img: ImageRgb, clock) -> tuple[ImageRgb, dict]:
    """One frame through the pipeline with per-stage wall times (seconds)."""
    from .dcprior import dark_channel, guided_filter_array
    from .imagecore import grayscale, stack_guide

    t0 = clock()
    dark = dark_channel(img, model.dcp)
    t1 = clock()
    refined = np.clip(guided_filter_array(grayscale(img), dark.data, model.gfp.radius, model.gfp.epsilon), 0.0, 1.0)
    t2 = clock()
    stack = stack_guide(img, ImagePlane(refined))
    x = nhwc_to_nchw(stack.to_array()[None])
    t3 = clock()
    with torch.inference_mode():
        y = generator_forward(model.G, x, model.mode)
    out = ImageRgb(np.clip(nchw_to_nhwc(y)[0], 0.0, 1.0))
    t4 = clock()
    return out, {
        "dark_channel": t1 - t0,
        "guided_filter": t2 - t1,
        "embed": t3 - t2,
        "generator": t4 - t3,
    }
