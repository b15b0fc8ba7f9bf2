"""Paired clear/smoked dataset generation, manifests and batching.

Layout under ``out_dir``::

    manifest.jsonl          header line, then one PairRecord per line
    clear/<id>.png
    smoked/<id>.png

Paths in the manifest are relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__
from .dcprior import DarkChannelParams, GuidedFilterParams, prepare_input
from .imagecore import ImageRgb, dequantize, load_image, quantize, resize_to, save_image
from .smokesim import IntensityTier, SmokeConfig, SmokeParams, apply_smoke, sample_params

MANIFEST_NAME = "manifest.jsonl"
TIERS = (IntensityTier.LOW, IntensityTier.MEDIUM, IntensityTier.HIGH)


class DatasetError(Exception):
    pass


class MissingFileError(DatasetError, FileNotFoundError):
    pass


@dataclass(frozen=True)
class PairRecord:
    id: str
    clear_path: str
    smoked_path: str
    tier: IntensityTier
    smoke: SmokeParams
    split: str
    source: str = ""
    source_group: str | None = None

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "split": self.split,
            "tier": self.tier.value,
            "clear_path": self.clear_path,
            "smoked_path": self.smoked_path,
            "smoke": self.smoke.to_dict(),
            "source": self.source,
        }
        if self.source_group is not None:
            d["source_group"] = self.source_group
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        return cls(
            id=d["id"],
            clear_path=d["clear_path"],
            smoked_path=d["smoked_path"],
            tier=IntensityTier(d["tier"]),
            smoke=SmokeParams.from_dict(d["smoke"]),
            split=d["split"],
            source=d.get("source", ""),
            source_group=d.get("source_group"),
        )


@dataclass
class DatasetManifest:
    records: list[PairRecord]
    resolution: int
    global_seed: int
    tool_version: str = __version__
    root: Path = field(default=Path("."), compare=False)

    def split(self, name: str) -> list[PairRecord]:
        return [r for r in self.records if r.split == name]

    def path(self, rel: str) -> Path:
        return self.root / rel


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def _record_seed(global_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([global_seed, 7, index]).generate_state(2, np.uint32).view(np.uint64)[0])


def find_frames(clear_dir) -> list[tuple[Path, str | None]]:
    """PNG frames under ``clear_dir``; a subdirectory name becomes the group."""
    clear_dir = Path(clear_dir)
    if not clear_dir.is_dir():
        raise DatasetError(f"clear frame directory does not exist: {clear_dir}")
    frames = []
    for p in sorted(clear_dir.rglob("*.png")):
        rel = p.relative_to(clear_dir)
        group = rel.parts[0] if len(rel.parts) > 1 else None
        frames.append((p, group))
    return frames


def split_frames(frames, n_train: int, n_test: int, seed: int):
    """Disjoint train/test selection; frames of one group never straddle splits."""
    if len(frames) < n_train + n_test:
        raise DatasetError(f"need {n_train + n_test} source images, found {len(frames)}")
    rng = _rng(seed, 3)
    grouped = any(g is not None for _, g in frames)
    if not grouped:
        order = rng.permutation(len(frames))
        test = [frames[i] for i in order[:n_test]]
        train = [frames[i] for i in order[n_test : n_test + n_train]]
        return sorted(train), sorted(test)

    groups: dict[str, list] = {}
    for f in frames:
        groups.setdefault(f[1] or "", []).append(f)
    names = sorted(groups)
    names = [names[i] for i in rng.permutation(len(names))]
    test, train = [], []
    for name in names:
        if len(test) < n_test:
            test.extend(groups[name])
        else:
            train.extend(groups[name])
    if len(test) < n_test or len(train) < n_train:
        raise DatasetError(
            f"cannot split {len(names)} source groups into {n_train} train / {n_test} test frames "
            "without sharing a group between splits"
        )
    test = [test[i] for i in sorted(rng.choice(len(test), n_test, replace=False))]
    train = [train[i] for i in sorted(rng.choice(len(train), n_train, replace=False))]
    return train, test


def _normalize_mix(tier_mix) -> np.ndarray:
    mix = np.asarray(tier_mix, dtype=np.float64)
    if mix.shape != (3,) or np.any(mix < 0) or not math.isclose(mix.sum(), 1.0, abs_tol=1e-9):
        raise DatasetError(f"tier proportions must be three non-negative numbers summing to 1, got {tier_mix}")
    return mix / mix.sum()


def generate(
    clear_dir,
    out_dir,
    n_train: int,
    n_test: int,
    seed: int = 0,
    tier_mix: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
    resolution: int = 256,
    smoke_cfg: SmokeConfig = SmokeConfig(),
) -> DatasetManifest:
    """Resize, smoke and write every selected frame, then the manifest."""
    mix = _normalize_mix(tier_mix)
    out_dir = Path(out_dir)
    frames = find_frames(clear_dir)
    train, test = split_frames(frames, n_train, n_test, seed)
    (out_dir / "clear").mkdir(parents=True, exist_ok=True)
    (out_dir / "smoked").mkdir(parents=True, exist_ok=True)

    tier_rng = _rng(seed, 4)
    records = []
    index = 0
    for split, chosen in (("train", train), ("test", test)):
        for path, group in chosen:
            rid = f"{split}_{index:06d}"
            tier = TIERS[int(tier_rng.choice(3, p=mix))]
            try:
                src = load_image(path)
            except Exception as exc:
                raise DatasetError(f"unreadable source image {path}: {exc}") from exc
            # smoke is computed from the quantized clear frame so it can be rederived from the file
            clear = ImageRgb(dequantize(quantize(resize_to(src, resolution, resolution).data)))
            params = sample_params(tier, _record_seed(seed, index), smoke_cfg)
            smoked = apply_smoke(clear, params)
            clear_rel, smoked_rel = f"clear/{rid}.png", f"smoked/{rid}.png"
            save_image(clear, out_dir / clear_rel)
            save_image(smoked, out_dir / smoked_rel)
            records.append(
                PairRecord(
                    id=rid,
                    clear_path=clear_rel,
                    smoked_path=smoked_rel,
                    tier=tier,
                    smoke=params,
                    split=split,
                    source=str(Path(path).relative_to(clear_dir)),
                    source_group=group,
                )
            )
            index += 1
    manifest = DatasetManifest(records, resolution, seed, __version__, out_dir)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    header = {
        "kind": "header",
        "resolution": manifest.resolution,
        "global_seed": manifest.global_seed,
        "tool_version": manifest.tool_version,
        "count": len(manifest.records),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in manifest.records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise MissingFileError(f"no manifest at {path}")
    header = None
    records = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if obj.get("kind") == "header":
                header = obj
                continue
            rec = PairRecord.from_dict(obj)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed manifest line ({exc})") from exc
        if rec.id in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    if header is None:
        raise DatasetError(f"{path}: missing header line")
    manifest = DatasetManifest(
        records, int(header["resolution"]), int(header["global_seed"]), header["tool_version"], path.parent
    )
    if check_files:
        for rec in records:
            for rel in (rec.clear_path, rec.smoked_path):
                if not manifest.path(rel).is_file():
                    raise MissingFileError(f"record {rec.id}: missing file {rel}")
    return manifest


def regenerate_smoked(manifest: DatasetManifest, rec: PairRecord) -> ImageRgb:
    return apply_smoke(load_image(manifest.path(rec.clear_path)), rec.smoke)


@dataclass
class Batch:
    ids: list[str]
    inputs: np.ndarray   # (N, H, W, 4) float32
    targets: np.ndarray  # (N, H, W, 3) float32


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    return _rng(shuffle_seed, 5, epoch).permutation(n)


def load_pair(manifest, rec, dcp, gfp) -> tuple[np.ndarray, np.ndarray]:
    stack = prepare_input(load_image(manifest.path(rec.smoked_path)), dcp, gfp)
    return stack.to_array(), load_image(manifest.path(rec.clear_path)).data


def make_batch(manifest, records, dcp, gfp, cache: dict | None = None) -> Batch:
    xs, ys = [], []
    for rec in records:
        if cache is not None and rec.id in cache:
            x, y = cache[rec.id]
        else:
            x, y = load_pair(manifest, rec, dcp, gfp)
            if cache is not None:
                cache[rec.id] = (x, y)
        xs.append(x)
        ys.append(y)
    return Batch([r.id for r in records], np.stack(xs), np.stack(ys))


def batches(
    manifest: DatasetManifest,
    split: str,
    batch_size: int,
    shuffle_seed: int | None = 0,
    epoch: int = 0,
    dcp: DarkChannelParams = DarkChannelParams(),
    gfp: GuidedFilterParams = GuidedFilterParams(),
    cache: dict | None = None,
) -> Iterator[Batch]:
    """One epoch of (4-channel input, clear target) batches.

    ``shuffle_seed=None`` keeps manifest order. The last batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    recs = manifest.split(split)
    order = range(len(recs)) if shuffle_seed is None else epoch_order(len(recs), shuffle_seed, epoch)
    order = list(order)
    for start in range(0, len(order), batch_size):
        chunk = [recs[i] for i in order[start : start + batch_size]]
        yield make_batch(manifest, chunk, dcp, gfp, cache)


# --- procedural clear frames -------------------------------------------------

def synthetic_clear_frame(resolution: int, seed: int) -> ImageRgb:
    """Tissue-like test frame: saturated reds/pinks, darker folds, a few highlights.

    Dark-channel values stay low, as in real clear laparoscopic frames.
    """
    from .smokesim import fractal_noise

    rng = _rng(seed, 11)
    r = resolution
    n1 = fractal_noise(r, r, SmokeParams(1.0, seed=int(rng.integers(2**63)), octaves=5, base_frequency=3.0))
    n2 = fractal_noise(r, r, SmokeParams(1.0, seed=int(rng.integers(2**63)), octaves=3, base_frequency=6.0))
    n1 = (n1 - n1.min()) / max(n1.max() - n1.min(), 1e-12)
    n2 = (n2 - n2.min()) / max(n2.max() - n2.min(), 1e-12)

    base = np.array([rng.uniform(0.65, 0.9), rng.uniform(0.15, 0.35), rng.uniform(0.12, 0.3)])
    alt = np.array([rng.uniform(0.75, 0.95), rng.uniform(0.45, 0.65), rng.uniform(0.35, 0.55)])
    img = base * (1 - n1[..., None]) + alt * n1[..., None]
    shade = 0.45 + 0.55 * np.clip(n2 * 1.4 - 0.2, 0.0, 1.0)
    img = img * shade[..., None]

    yy, xx = np.mgrid[0:r, 0:r] / r
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        rad = rng.uniform(0.01, 0.04)
        spot = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad**2))
        img = img + 0.6 * spot[..., None]
    vignette = 1.0 - 0.5 * ((yy - 0.5) ** 2 + (xx - 0.5) ** 2) / 0.5
    img = img * vignette[..., None]
    return ImageRgb(np.clip(img, 0.0, 1.0))


def make_clear_frames(out_dir, n: int, resolution: int = 256, seed: int = 0, groups: int = 0) -> list[Path]:
    """Write ``n`` procedural clear frames; ``groups > 0`` spreads them over subdirectories."""
    out_dir = Path(out_dir)
    paths = []
    for i in range(n):
        sub = out_dir / f"video{i % groups:02d}" if groups else out_dir
        sub.mkdir(parents=True, exist_ok=True)
        p = sub / f"frame{i:05d}.png"
        save_image(synthetic_clear_frame(resolution, _record_seed(seed, i)), p)
        paths.append(p)
    return paths
