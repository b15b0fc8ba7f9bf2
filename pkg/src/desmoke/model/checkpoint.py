"""Checkpoint container.

A checkpoint is an uncompressed ZIP archive (stored entries, fixed 1980-01-01
timestamps, sorted names) holding:

``meta.json``
    UTF-8 JSON: ``format`` ("desmoke-checkpoint"), ``format_version``,
    ``tool_version``, ``generator`` and ``discriminator`` specs, ``layers``
    (both shape tables), and free-form ``state`` (step, epoch, configs).
``G/<name>.npy``, ``D/<name>.npy``
    Parameters and buffers in NumPy ``.npy`` format, float32 (BatchNorm's
    ``num_batches_tracked`` counter stays int64).
``optG/<index>/<key>.npy``, ``optD/<index>/<key>.npy``
    Adam state per parameter index (``step``, ``exp_avg``, ``exp_avg_sq``).
``optG/param_groups.json``, ``optD/param_groups.json``
    Optimizer hyperparameters.

The same inputs always produce the same bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from .networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    PatchDiscriminator,
    UNetGenerator,
    expected_discriminator_trace,
    expected_generator_trace,
)

FORMAT = "desmoke-checkpoint"
FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(Exception):
    pass


class SpecMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    G: UNetGenerator
    D: PatchDiscriminator
    opt_g: dict | None = None
    opt_d: dict | None = None
    state: dict = field(default_factory=dict)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.array(arr, order="C"), allow_pickle=False)
    return buf.getvalue()


def _tensor_array(t: torch.Tensor) -> np.ndarray:
    a = t.detach().cpu().numpy()
    if np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float32)
    return a


def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _opt_entries(prefix: str, sd: dict) -> dict[str, bytes]:
    out = {f"{prefix}/param_groups.json": json.dumps(sd["param_groups"], sort_keys=True).encode()}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            arr = _tensor_array(val) if torch.is_tensor(val) else np.asarray(val, dtype=np.float32)
            out[f"{prefix}/{idx}/{key}.npy"] = _npy_bytes(arr)
    return out


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    meta = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "generator": ckpt.G.spec.to_dict(),
        "discriminator": ckpt.D.spec.to_dict(),
        "layers": {
            "generator": expected_generator_trace(ckpt.G.spec),
            "discriminator": expected_discriminator_trace(ckpt.D.spec),
        },
        "state": ckpt.state,
    }
    entries = {"meta.json": json.dumps(meta, sort_keys=True, indent=1).encode()}
    for prefix, net in (("G", ckpt.G), ("D", ckpt.D)):
        for name, t in net.state_dict().items():
            entries[f"{prefix}/{name}.npy"] = _npy_bytes(_tensor_array(t))
    if ckpt.opt_g is not None:
        entries.update(_opt_entries("optG", ckpt.opt_g))
    if ckpt.opt_d is not None:
        entries.update(_opt_entries("optD", ckpt.opt_d))
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            _write(zf, name, entries[name])
    tmp.replace(path)
    return path


def read_meta(path) -> dict:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {meta.get('format_version')}")
    return meta


def _load_array(zf, name) -> np.ndarray:
    return np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)


def _read_opt(zf: zipfile.ZipFile, prefix: str) -> dict | None:
    names = [n for n in zf.namelist() if n.startswith(prefix + "/")]
    if not names:
        return None
    groups = json.loads(zf.read(f"{prefix}/param_groups.json"))
    state: dict[int, dict] = {}
    for n in names:
        if not n.endswith(".npy"):
            continue
        _, idx, key = n.split("/")
        state.setdefault(int(idx), {})[key[:-4]] = torch.from_numpy(_load_array(zf, n).copy())
    return {"state": state, "param_groups": groups}


def load_checkpoint(path, expect_generator: GeneratorSpec | None = None) -> Checkpoint:
    """Rebuild both networks and optimizer state from ``path``.

    With ``expect_generator`` given, a checkpoint describing a different
    generator raises :class:`SpecMismatchError`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    meta = read_meta(path)
    g_spec = GeneratorSpec.from_dict(meta["generator"])
    d_spec = DiscriminatorSpec.from_dict(meta["discriminator"])
    if expect_generator is not None and _arch(expect_generator) != _arch(g_spec):
        raise SpecMismatchError(
            f"checkpoint generator (resolution {g_spec.resolution}, scale {g_spec.width_scale}) "
            f"does not match configuration (resolution {expect_generator.resolution}, "
            f"scale {expect_generator.width_scale})"
        )
    G = UNetGenerator(g_spec)
    D = PatchDiscriminator(d_spec)
    try:
        with zipfile.ZipFile(path) as zf:
            for prefix, net in (("G", G), ("D", D)):
                sd = {}
                for name, ref in net.state_dict().items():
                    arr = _load_array(zf, f"{prefix}/{name}.npy")
                    if tuple(arr.shape) != tuple(ref.shape):
                        raise CheckpointError(f"{prefix}/{name}: shape {arr.shape} != {tuple(ref.shape)}")
                    sd[name] = torch.from_numpy(arr.copy()).to(ref.dtype)
                net.load_state_dict(sd)
            opt_g = _read_opt(zf, "optG")
            opt_d = _read_opt(zf, "optD")
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return Checkpoint(G, D, opt_g, opt_d, meta.get("state", {}))


def _arch(spec: GeneratorSpec) -> dict:
    d = spec.to_dict()
    d.pop("dropout", None)
    return d
