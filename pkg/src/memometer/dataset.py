"""Training-data ingestion: flat D-dimensional sample matrices with stable ids.

Two on-disk formats are supported: the CIFAR-10 binary batch layout and a
raw little-endian float32 blob with a JSON sidecar.  Samples are stored as
float32; all downstream flow arithmetic promotes to float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_DIM = 3072


@dataclass
class Dataset:
    """n flat samples of dimension D, scaled into ``value_range``."""

    samples: np.ndarray                 # (n, D) float32
    ids: list[str]
    value_range: tuple[float, float] = (-1.0, 1.0)
    shape_meta: tuple[int, ...] = ()

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1 or self.samples.shape[1] < 1:
            raise ValueError("samples must be a non-empty n x D matrix")
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != self.samples.shape[0]:
            raise ValueError("ids must match the number of samples")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError("value_range must be an increasing pair")
        if self.samples.min() < lo or self.samples.max() > hi:
            raise ValueError("sample entries fall outside the declared value_range")
        if not self.shape_meta:
            self.shape_meta = (self.samples.shape[1],)
        self.shape_meta = tuple(int(s) for s in self.shape_meta)
        if int(np.prod(self.shape_meta)) != self.samples.shape[1]:
            raise ValueError("shape_meta does not multiply out to D")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def fingerprint(self) -> str:
        """Content hash used by run manifests."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.int64(self.dim).tobytes())
        h.update(np.float64(self.value_range).tobytes())
        h.update(",".join(map(str, self.shape_meta)).encode())
        h.update("\0".join(self.ids).encode())
        h.update(self.samples.tobytes())
        return h.hexdigest()


def load_cifar10(paths, value_range=(-1.0, 1.0)) -> Dataset:
    """Load CIFAR-10 binary batch files into one Dataset.

    Each record is one label byte followed by 3072 pixel bytes in
    channel-planar R,G,B order, rows major.  Pixels are transposed to
    H x W x C and affinely mapped from [0, 255] into ``value_range``.
    Ids are ``<filename>#<index>``.
    """
    blocks, ids = [], []
    lo, hi = float(value_range[0]), float(value_range[1])
    for path in [Path(p) for p in paths]:
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise DataFormatError(f"cannot read {path}: {exc}") from exc
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        n = len(raw) // CIFAR_RECORD_BYTES
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
        pix = rec[:, 1:].reshape(n, 3, 32, 32).transpose(0, 2, 3, 1).reshape(n, CIFAR_DIM)
        blocks.append(lo + pix.astype(np.float32) * np.float32((hi - lo) / 255.0))
        ids.extend(f"{path.name}#{i:05d}" for i in range(n))
    if not blocks:
        raise DataFormatError("no batch files given")
    return Dataset(
        samples=np.concatenate(blocks, axis=0),
        ids=ids,
        value_range=(lo, hi),
        shape_meta=(32, 32, 3),
    )


def load_raw(tensor_path, meta_path) -> Dataset:
    """Load a little-endian float32 blob described by a JSON sidecar.

    The sidecar declares ``n``, ``D``, ``shape``, ``value_range`` and an
    optional ``ids`` list; missing ids are synthesized as zero-padded
    row indices.
    """
    tensor_path, meta_path = Path(tensor_path), Path(meta_path)
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{meta_path}: not valid JSON: {exc}") from exc
    try:
        n, dim = int(meta["n"]), int(meta["D"])
        shape = tuple(int(s) for s in meta["shape"])
        value_range = (float(meta["value_range"][0]), float(meta["value_range"][1]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{meta_path}: missing or malformed field: {exc}") from exc
    try:
        raw = tensor_path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {tensor_path}: {exc}") from exc
    if len(raw) != 4 * n * dim:
        raise DataFormatError(
            f"{tensor_path}: {len(raw)} bytes but metadata declares n={n}, D={dim} "
            f"({4 * n * dim} bytes required)"
        )
    samples = np.frombuffer(raw, dtype="<f4").reshape(n, dim)
    ids = meta.get("ids")
    if ids is None:
        width = max(6, len(str(n - 1)))
        ids = [f"{i:0{width}d}" for i in range(n)]
    elif len(ids) != n:
        raise DataFormatError(f"{meta_path}: ids length {len(ids)} != n={n}")
    try:
        return Dataset(samples=samples, ids=ids, value_range=value_range, shape_meta=shape)
    except ValueError as exc:
        raise DataFormatError(f"{tensor_path}: {exc}") from exc


def save_raw(ds: Dataset, tensor_path, meta_path) -> None:
    """Write the blob + sidecar pair read back bit-exactly by load_raw."""
    tensor_path, meta_path = Path(tensor_path), Path(meta_path)
    tensor_path.write_bytes(np.ascontiguousarray(ds.samples, dtype="<f4").tobytes())
    meta = {
        "n": ds.n,
        "D": ds.dim,
        "shape": list(ds.shape_meta),
        "value_range": [ds.value_range[0], ds.value_range[1]],
        "ids": ds.ids,
    }
    meta_path.write_text(json.dumps(meta, indent=1) + "\n")


def sidecar_path(tensor_path) -> Path:
    """Conventional sidecar location: swap the suffix for .json, else append."""
    p = Path(tensor_path)
    cand = p.with_suffix(".json") if p.suffix else Path(str(p) + ".json")
    if not cand.exists() and Path(str(p) + ".json").exists():
        return Path(str(p) + ".json")
    return cand


def augment_hflip(ds: Dataset) -> Dataset:
    """Append horizontally mirrored copies of every sample.

    Requires H x W x C shape metadata; mirrored ids get a ``+hflip`` suffix.
    Applying the flip to the mirrored block restores the originals.
    """
    if len(ds.shape_meta) != 3:
        raise ValueError("horizontal flip needs H x W x C shape metadata")
    h, w, c = ds.shape_meta
    imgs = ds.samples.reshape(ds.n, h, w, c)
    flipped = imgs[:, :, ::-1, :].reshape(ds.n, ds.dim)
    return Dataset(
        samples=np.concatenate([ds.samples, flipped], axis=0),
        ids=ds.ids + [f"{i}+hflip" for i in ds.ids],
        value_range=ds.value_range,
        shape_meta=ds.shape_meta,
    )


def split(ds: Dataset, held_out: int, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint partition: (rest, held_out_part)."""
    if not 0 < held_out < ds.n:
        raise ValueError(f"held_out must be in (0, {ds.n})")
    perm = np.random.default_rng(seed).permutation(ds.n)
    held_idx, rest_idx = perm[:held_out], perm[held_out:]

    def take(idx):
        return Dataset(
            samples=ds.samples[idx],
            ids=[ds.ids[i] for i in idx],
            value_range=ds.value_range,
            shape_meta=ds.shape_meta,
        )

    return take(rest_idx), take(held_idx)
