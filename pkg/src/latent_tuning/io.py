"""On-disk formats for datasets, trained weights and tuning trajectories.

Arrays go into ``.npz`` archives written with fixed zip timestamps, so the
same content always produces the same bytes. Each archive carries a JSON
header entry naming its kind and a "major.minor" schema version; readers
refuse archives whose major version differs from their own.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .beamsim import Dataset, GeneratorConfig
from .core import ImageGrid
from .net import NetworkSpec, NetworkWeights

SCHEMA_VERSION = "1.0"
_HEADER = "header.json"
_EPOCH = (1980, 1, 1, 0, 0, 0)


class FormatError(ValueError):
    pass


def _write_npz(path, header: dict, arrays: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo(_HEADER, _EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1))
        for name, a in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(a), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", _EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())
    tmp.replace(path)


def _read_npz(path, kind: str) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read(_HEADER))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)),
                                                                 allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path} is not a {kind} archive: {exc}") from exc
    if header.get("kind") != kind:
        raise FormatError(f"{path} holds {header.get('kind')!r}, expected {kind!r}")
    check_version(header.get("schema_version"), str(path))
    return header, arrays


def major_version(v) -> int:
    try:
        return int(str(v).split(".")[0])
    except ValueError:
        raise FormatError(f"malformed schema version {v!r}") from None


def check_version(v, where: str) -> None:
    if v is None or major_version(v) != major_version(SCHEMA_VERSION):
        raise FormatError(f"{where} has schema version {v}, this reader supports {SCHEMA_VERSION}")


def save_dataset(ds: Dataset, path) -> None:
    header = {"kind": "dataset", "schema_version": SCHEMA_VERSION, "n": len(ds),
              "seed": ds.seed, "config": ds.config.to_dict()}
    _write_npz(path, header, {"inputs": ds.inputs, "params": ds.params,
                              "knobs": ds.knobs, "targets": ds.targets})


def load_dataset(path) -> Dataset:
    header, a = _read_npz(path, "dataset")
    try:
        ds = Dataset(a["inputs"], a["params"], a["knobs"], a["targets"],
                     GeneratorConfig.from_dict(header["config"]), header.get("seed"))
    except KeyError as exc:
        raise FormatError(f"{path} is missing {exc}") from exc
    if len(ds) != header["n"]:
        raise FormatError(f"{path} declares {header['n']} records but holds {len(ds)}")
    return ds


def save_weights(w: NetworkWeights, path, extra: dict | None = None) -> None:
    header = {"kind": "weights", "schema_version": SCHEMA_VERSION, "spec": w.spec.to_dict(),
              "checksum": w.checksum(), **(extra or {})}
    _write_npz(path, header, w.arrays)


def load_weights(path) -> tuple[NetworkWeights, dict]:
    """Weights plus the archive header; the stored checksum is verified."""
    header, a = _read_npz(path, "weights")
    spec = NetworkSpec.from_dict(header["spec"])
    w = NetworkWeights(spec, {k: a[k] for k in spec.shapes() if k in a})
    if w.checksum() != header["checksum"]:
        raise FormatError(f"{path} fails its checksum")
    return w, header


def save_image_record(img: ImageGrid, path) -> None:
    Path(path).write_text(json.dumps(img.to_record()))


def load_image_record(path) -> ImageGrid:
    return ImageGrid.from_record(json.loads(Path(path).read_text()))


def write_pgm(pixels: np.ndarray, path) -> None:
    """8-bit binary PGM, scaled to the image maximum; rows top to bottom."""
    a = np.asarray(pixels, dtype=float).T[::-1]  # second axis upward
    peak = a.max()
    g = np.zeros(a.shape, np.uint8) if peak <= 0 else np.round(255 * a / peak).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode())
        fh.write(g.tobytes())


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
