"""On-disk formats: RDM1 radial maps, trajectory JSON, head checkpoints.

RDM1 layout: 4-byte magic "RDM1", then little-endian u32 width, height,
frames, then frames*height*width little-endian f32 values in frame-major,
row-major order. Non-finite entries encode invalid pixels. An optional
JSON sidecar (<path>.json) carries {near_stat, units, source_valid_policy}.

Head checkpoints: little-endian u32 header length, a JSON header listing
field names and shapes in declaration order, then the concatenated flat
little-endian f32 arrays.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera import RigidTransform, UcmCamera
from .head import HeadParams
from .supervision import RadialMap

__all__ = [
    "FormatError",
    "RDM1_MAGIC",
    "write_rdm1",
    "read_rdm1",
    "read_sidecar",
    "save_trajectory",
    "load_trajectory",
    "save_head_params",
    "load_head_params",
]

RDM1_MAGIC = b"RDM1"
_HEADER_FMT = "<III"
_TRAJ_ROTATION_TOL = 1e-6


class FormatError(ValueError):
    """Malformed file; carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_rdm1(path, radial_map: RadialMap, near_stat: float | None = None, units: str = "meters") -> None:
    """Write a radial map; invalid pixels are stored as NaN."""
    path = Path(path)
    f, h, w = radial_map.values.shape
    payload = np.where(radial_map.source_valid, radial_map.values, np.nan)
    payload = np.ascontiguousarray(payload, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(RDM1_MAGIC)
        fh.write(struct.pack(_HEADER_FMT, w, h, f))
        fh.write(payload.tobytes())
    if near_stat is not None:
        sidecar = {
            "near_stat": near_stat,
            "units": units,
            "source_valid_policy": "nonfinite",
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, sort_keys=True) + "\n"
        )


def read_rdm1(path) -> RadialMap:
    """Read a radial map; non-finite entries become invalid pixels."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != RDM1_MAGIC:
        raise FormatError("bad RDM1 magic", 0)
    if len(data) < 16:
        raise FormatError("truncated RDM1 header", len(data))
    w, h, f = struct.unpack_from(_HEADER_FMT, data, 4)
    expected = 16 + 4 * f * h * w
    if len(data) != expected:
        raise FormatError(
            f"RDM1 payload length mismatch: have {len(data)} bytes, expected {expected}",
            min(len(data), expected),
        )
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(f, h, w).astype(float)
    return RadialMap(values=values, source_valid=np.isfinite(values))


def read_sidecar(path) -> dict | None:
    sidecar = Path(path).with_suffix(Path(path).suffix + ".json")
    if not sidecar.exists():
        return None
    return json.loads(sidecar.read_text())


def save_trajectory(path, cam: UcmCamera, poses) -> None:
    """Write intrinsics and per-frame camera-to-world 4x4 matrices."""
    doc = {
        "camera": {
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "xi": cam.xi, "width": cam.width, "height": cam.height,
        },
        "poses": [_pose_matrix(p).tolist() for p in poses],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def _pose_matrix(pose: RigidTransform) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = pose.rotation
    m[:3, 3] = pose.translation
    return m


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    fix = np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))])
    return u @ fix @ vt


def load_trajectory(path):
    """Load (camera, poses); rotations must be orthonormal within 1e-6.

    Accepted rotations are re-orthonormalized so the stricter transform
    invariant holds downstream.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid trajectory JSON: {e.msg}", e.pos) from e
    try:
        c = doc["camera"]
        cam = UcmCamera(
            fx=float(c["fx"]), fy=float(c["fy"]), cx=float(c["cx"]), cy=float(c["cy"]),
            xi=float(c["xi"]), width=int(c["width"]), height=int(c["height"]),
        )
        matrices = [np.asarray(m, dtype=float) for m in doc["poses"]]
    except (KeyError, TypeError) as e:
        raise FormatError(f"trajectory document missing field: {e}", 0) from e
    poses = []
    for i, m in enumerate(matrices):
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise ValueError(f"pose {i} is not a finite 4x4 matrix")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
            raise ValueError(f"pose {i} bottom row must be [0, 0, 0, 1]")
        r = m[:3, :3]
        dev = max(
            np.max(np.abs(r.T @ r - np.eye(3))),
            abs(np.linalg.det(r) - 1.0),
        )
        if dev > _TRAJ_ROTATION_TOL:
            raise ValueError(
                f"pose {i} rotation deviates from orthonormal by {dev:.3e} (> {_TRAJ_ROTATION_TOL})"
            )
        poses.append(RigidTransform(_orthonormalize(r), m[:3, 3]))
    if not poses:
        raise ValueError("trajectory must contain at least one pose")
    return cam, poses


def save_head_params(path, params: HeadParams) -> None:
    arrays = params.field_arrays()
    header = json.dumps(
        {"dtype": "<f4", "fields": [[name, list(a.shape)] for name, a in arrays]},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_head_params(path) -> HeadParams:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError("truncated checkpoint header length", len(data))
    (header_len,) = struct.unpack_from("<I", data, 0)
    if len(data) < 4 + header_len:
        raise FormatError("truncated checkpoint header", len(data))
    try:
        header = json.loads(data[4 : 4 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError("invalid checkpoint header JSON", 4) from e
    offset = 4 + header_len
    out = {}
    for name, shape in header["fields"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if len(data) < offset + nbytes:
            raise FormatError(f"truncated checkpoint payload for {name}", offset)
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(float)
        offset += nbytes
    if offset != len(data):
        raise FormatError("trailing bytes after checkpoint payload", offset)
    return HeadParams(**out)
