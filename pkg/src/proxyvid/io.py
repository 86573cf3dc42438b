"""
File formats.

* Frames: ``frame_%05d.png`` (8-bit RGB); masks: ``layer_%02d/mask_%05d.png``
  (0/255), one file per frame of the layer's lifetime.
* ``.pvt`` trajectories: ``"PVT1"``, u32 layer_id, g, n_frames, t_start, then
  float32 positions (node-major, frame-minor, x before y) and float32
  confidences. Little-endian throughout.
* ``.pvm`` run-length masks: ``"PVM1"``, u32 layer_id, h, w, t_start,
  n_frames, then per frame u32 run count followed by (u32 start, u32 length)
  runs over the row-major raster.
* ``.pvr`` representation: ``"PVXR"``, u32 version, u64 metadata length,
  UTF-8 JSON metadata, then 64-byte aligned little-endian arrays located by
  the metadata's section table. Every section carries a CRC-32; the metadata
  carries a CRC-32 of its own canonical encoding.
* Diagnostics: JSON lines.
"""
from __future__ import annotations

import json
import re
import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from .appearance import DecoderParams
from .exceptions import FormatError
from .propagation import ProxyLayer
from .representation import FORMAT_VERSION, Representation, validate
from .video import FrameSequence, LayerMaskTrack

__all__ = [
    "write_frames",
    "read_frames",
    "write_masks",
    "read_masks",
    "read_video",
    "write_video",
    "write_pvt",
    "read_pvt",
    "write_pvm",
    "read_pvm",
    "save_pvr",
    "load_pvr",
    "write_jsonl",
    "read_jsonl",
    "write_png",
    "read_png",
    "write_ppm",
]

PVT_MAGIC = b"PVT1"
PVM_MAGIC = b"PVM1"
PVR_MAGIC = b"PVXR"
ALIGN = 64
SUPPORTED_VERSIONS = (FORMAT_VERSION,)


# -- rasters ---------------------------------------------------------------------

def to_uint8(img):
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, img):
    img = np.asarray(img)
    if img.dtype == bool:
        Image.fromarray(img.astype(np.uint8) * 255, mode="L").save(path)
    else:
        Image.fromarray(to_uint8(img)).save(path)


def read_png(path, mask=False):
    with Image.open(path) as im:
        if mask:
            return np.asarray(im.convert("L")) >= 128
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_ppm(path, img):
    """Binary 8-bit PPM (P6), for byte-exact comparisons without PNG."""
    data = to_uint8(img)
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_frames(directory, frames):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, img in enumerate(frames):
        write_png(directory / f"frame_{t:05d}.png", img)


def _indexed(directory, pattern):
    rx = re.compile(pattern)
    out = {}
    for p in Path(directory).iterdir():
        m = rx.fullmatch(p.name)
        if m:
            out[int(m.group(1))] = p
    return dict(sorted(out.items()))


def read_frames(directory):
    files = _indexed(directory, r"frame_(\d{5})\.png")
    if not files:
        raise FileNotFoundError(f"no frame_%05d.png files in {directory}")
    if list(files) != list(range(len(files))):
        raise FormatError(f"frame numbering in {directory} is not contiguous from 0")
    return np.stack([read_png(p) for p in files.values()])


def write_masks(directory, layers):
    directory = Path(directory)
    for track in layers:
        sub = directory / f"layer_{track.layer_id:02d}"
        sub.mkdir(parents=True, exist_ok=True)
        for j, m in enumerate(track.masks):
            write_png(sub / f"mask_{track.t_start + j:05d}.png", np.asarray(m, dtype=bool))


def read_masks(directory):
    """Mask tracks from ``layer_XX`` subdirectories (or ``layer_XX.pvm`` files)."""
    directory = Path(directory)
    tracks = []
    subdirs = _indexed(directory, r"layer_(\d{2})")
    for lid, path in subdirs.items():
        if path.is_file() and path.suffix == ".pvm":
            continue
        if path.is_dir():
            files = _indexed(path, r"mask_(\d{5})\.png")
            if not files:
                continue
            ts = list(files)
            if ts != list(range(ts[0], ts[-1] + 1)):
                raise FormatError(f"mask frames of {path} are not contiguous")
            masks = np.stack([read_png(p, mask=True) for p in files.values()])
            tracks.append(LayerMaskTrack(lid, ts[0], ts[-1], masks))
    for lid, path in _indexed(directory, r"layer_(\d{2})\.pvm").items():
        if any(t.layer_id == lid for t in tracks):
            continue
        tracks.append(read_pvm(path))
    tracks.sort(key=lambda t: t.layer_id)
    return tracks


def write_video(directory, video):
    write_frames(directory, video.frames)
    write_masks(directory, video.layers)


def read_video(directory, mask_dir=None):
    frames = read_frames(directory)
    layers = read_masks(mask_dir or directory)
    if not layers:
        n, h, w = frames.shape[:3]
        layers = [LayerMaskTrack(0, 0, n - 1, np.ones((n, h, w), dtype=bool))]
    return FrameSequence(frames, layers)


# -- binary helpers ----------------------------------------------------------------

class _Reader:
    def __init__(self, data, kind):
        self.data = data
        self.pos = 0
        self.kind = kind

    def take(self, n, section):
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError(f"{self.kind}: unexpected EOF", section, self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, section):
        return struct.unpack("<I", self.take(4, section))[0]

    def u64(self, section):
        return struct.unpack("<Q", self.take(8, section))[0]

    def array(self, count, section, dtype="<f4"):
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * size, section), dtype=dtype)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.kind}: {len(self.data) - self.pos} trailing bytes", "end", self.pos)


def _magic(r, magic):
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"{r.kind}: bad magic {got!r}, expected {magic!r}", "magic", 0)


# -- .pvt --------------------------------------------------------------------------

def write_pvt(path, layer_id, t_start, positions, confidence):
    positions = np.asarray(positions, dtype="<f4")
    confidence = np.asarray(confidence, dtype="<f4")
    g, n = positions.shape[:2]
    if positions.shape != (g, n, 2) or confidence.shape != (g, n):
        raise ValueError("positions must be (g, n, 2) and confidence (g, n)")
    with open(path, "wb") as fh:
        fh.write(PVT_MAGIC)
        fh.write(struct.pack("<IIII", int(layer_id), g, n, int(t_start)))
        fh.write(positions.tobytes())
        fh.write(confidence.tobytes())


def write_layer_pvt(path, layer):
    write_pvt(path, layer.layer_id, layer.t_start, layer.positions, layer.confidence)


def read_pvt(path):
    """Returns ``(layer_id, t_start, positions (g, n, 2), confidence (g, n))`` as float64."""
    r = _Reader(Path(path).read_bytes(), ".pvt")
    _magic(r, PVT_MAGIC)
    layer_id = r.u32("header")
    g = r.u32("header")
    n = r.u32("header")
    t_start = r.u32("header")
    if n == 0:
        raise FormatError(".pvt: zero frames", "header", 12)
    pos = r.array(g * n * 2, "positions").reshape(g, n, 2).astype(np.float64)
    conf = r.array(g * n, "confidences").reshape(g, n).astype(np.float64)
    r.done()
    if not np.all(np.isfinite(pos)):
        raise FormatError(".pvt: non-finite position", "positions")
    if not np.all((conf >= 0.0) & (conf <= 1.0)):
        raise FormatError(".pvt: confidence outside [0, 1]", "confidences")
    return layer_id, t_start, pos, conf


# -- .pvm --------------------------------------------------------------------------

def _runs(flat):
    d = np.diff(np.concatenate([[0], flat.astype(np.int8), [0]]))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return starts, ends - starts


def write_pvm(path, track):
    n, h, w = track.masks.shape
    with open(path, "wb") as fh:
        fh.write(PVM_MAGIC)
        fh.write(struct.pack("<IIIII", int(track.layer_id), h, w, int(track.t_start), n))
        for m in track.masks:
            s, l = _runs(np.asarray(m, dtype=bool).ravel())
            fh.write(struct.pack("<I", len(s)))
            fh.write(np.stack([s, l], axis=1).astype("<u4").tobytes())


def read_pvm(path):
    r = _Reader(Path(path).read_bytes(), ".pvm")
    _magic(r, PVM_MAGIC)
    layer_id, h, w, t_start, n = (r.u32("header") for _ in range(5))
    if n == 0 or h == 0 or w == 0:
        raise FormatError(".pvm: empty raster", "header", 4)
    masks = np.zeros((n, h * w), dtype=bool)
    for j in range(n):
        k = r.u32(f"frame {j}")
        runs = r.array(2 * k, f"frame {j}", dtype="<u4").reshape(k, 2).astype(np.int64)
        for s, l in runs:
            if s + l > h * w:
                raise FormatError(f".pvm: run past end of raster in frame {j}", f"frame {j}", r.pos)
            masks[j, s:s + l] = True
    r.done()
    return LayerMaskTrack(int(layer_id), int(t_start), int(t_start) + n - 1, masks.reshape(n, h, w))


# -- .pvr --------------------------------------------------------------------------

def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def save_pvr(path, rep):
    """Write ``rep``; arrays are stored as float32 (masks as packed bits)."""
    blobs = []
    offset = [0]

    def add(name, arr):
        arr = np.ascontiguousarray(arr)
        data = arr.tobytes()
        blobs.append(data)
        entry = {"name": name, "offset": offset[0], "nbytes": len(data), "shape": list(arr.shape),
                 "dtype": arr.dtype.str, "crc32": zlib.crc32(data)}
        offset[0] += -(-len(data) // ALIGN) * ALIGN
        return entry

    layers = []
    for i, (layer, codes, track) in enumerate(zip(rep.layers, rep.codes, rep.masks)):
        layers.append({
            "layer_id": int(layer.layer_id),
            "t_start": int(layer.t_start),
            "t_end": int(layer.t_end),
            "round_tag": layer.round_tag.tolist(),
            "source_frame": layer.source_frame.tolist(),
            "diagnostics": _jsonable(layer.diagnostics),
            "positions": add(f"layer {i} positions", np.asarray(layer.positions, dtype="<f4")),
            "confidence": add(f"layer {i} confidence", np.asarray(layer.confidence, dtype="<f4")),
            "codes": add(f"layer {i} codes", np.asarray(codes, dtype="<f4")),
            "mask": {
                "layer_id": int(track.layer_id), "t_start": int(track.t_start), "t_end": int(track.t_end),
                "bits": add(f"layer {i} mask", np.packbits(np.asarray(track.masks, dtype=bool).ravel())),
                "shape": list(track.masks.shape),
            },
        })
    dec = rep.decoder
    decoder = {
        "code_dim": dec.code_dim, "n_freq": dec.n_freq, "include_raw": dec.include_raw,
        "use_position": dec.use_position, "use_freq": dec.use_freq, "activation": dec.activation,
        "weights": [add(f"decoder weight {k}", np.asarray(w, dtype="<f4")) for k, w in enumerate(dec.weights)],
        "biases": [add(f"decoder bias {k}", np.asarray(b, dtype="<f4")) for k, b in enumerate(dec.biases)],
    }
    header = {"meta": _jsonable(rep.meta), "layers": layers, "decoder": decoder}
    header["header_crc32"] = zlib.crc32(_canonical(header))
    text = _canonical(header)
    start = 4 + 4 + 8 + len(text)
    pad = -start % ALIGN
    with open(path, "wb") as fh:
        fh.write(PVR_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(text)))
        fh.write(text)
        fh.write(b"\0" * pad)
        for data in blobs:
            fh.write(data)
            fh.write(b"\0" * (-len(data) % ALIGN))


def load_pvr(path):
    """Read a ``.pvr`` file; any malformation raises :class:`FormatError` with its location."""
    data = Path(path).read_bytes()
    r = _Reader(data, ".pvr")
    _magic(r, PVR_MAGIC)
    version = r.u32("header")
    if version not in SUPPORTED_VERSIONS:
        raise FormatError(f".pvr: unsupported version {version}", "header", 4)
    n = r.u64("header")
    text = r.take(n, "metadata")
    base = r.pos + (-r.pos % ALIGN)
    if any(data[r.pos:base]):
        raise FormatError(".pvr: nonzero padding", "metadata padding", r.pos)
    try:
        header = json.loads(text.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f".pvr: metadata is not valid JSON ({exc})", "metadata", 16) from None
    try:
        return _from_header(header, data, base)
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
        raise FormatError(f".pvr: inconsistent metadata ({type(exc).__name__}: {exc})", "metadata", 16) from None


def _section(data, base, entry, expect_dtype="<f4"):
    name = entry["name"]
    start = base + int(entry["offset"])
    nbytes = int(entry["nbytes"])
    if entry["dtype"] != np.dtype(expect_dtype).str:
        raise FormatError(f".pvr: unexpected dtype {entry['dtype']}", name, start)
    if start < base or nbytes < 0 or start + nbytes > len(data):
        raise FormatError(".pvr: unexpected EOF", name, min(start, len(data)))
    raw = data[start:start + nbytes]
    if zlib.crc32(raw) != entry["crc32"]:
        raise FormatError(".pvr: checksum mismatch", name, start)
    arr = np.frombuffer(raw, dtype=expect_dtype)
    shape = tuple(int(s) for s in entry["shape"])
    if int(np.prod(shape)) != arr.size:
        raise FormatError(f".pvr: shape {shape} does not match {arr.size} stored values", name, start)
    return arr.reshape(shape)


def _from_header(header, data, base):
    if not isinstance(header, dict):
        raise FormatError(".pvr: metadata must be a JSON object", "metadata", 16)
    crc = header.pop("header_crc32", None)
    if crc != zlib.crc32(_canonical(header)):
        raise FormatError(".pvr: metadata checksum mismatch", "metadata", 16)
    end = base
    for entry in sorted(_entries(header), key=lambda e: int(e["offset"])):
        start = base + int(entry["offset"])
        stop = start + int(entry["nbytes"])
        if stop > len(data):
            raise FormatError(".pvr: unexpected EOF", entry["name"], len(data))
        if start < end:
            raise FormatError(".pvr: overlapping sections", entry["name"], start)
        if any(data[end:start]):
            raise FormatError(".pvr: nonzero padding", f"before {entry['name']}", end)
        end = stop
    padded = end + (-(end - base) % ALIGN)
    if len(data) != padded or any(data[end:]):
        raise FormatError(".pvr: unexpected trailing bytes", "end", end)
    meta = header["meta"]
    layers, codes, masks = [], [], []
    for entry in header["layers"]:
        pos = _section(data, base, entry["positions"]).astype(np.float64)
        conf = _section(data, base, entry["confidence"]).astype(np.float64)
        layer = ProxyLayer(entry["layer_id"], entry["t_start"], entry["t_end"], pos, entry["round_tag"],
                           entry["source_frame"], conf, entry.get("diagnostics", {}))
        layers.append(layer)
        codes.append(_section(data, base, entry["codes"]).astype(np.float64))
        m = entry["mask"]
        shape = tuple(m["shape"])
        bits = _section(data, base, m["bits"], expect_dtype="|u1")
        count = int(np.prod(shape))
        if bits.size * 8 < count:
            raise FormatError(".pvr: mask bits too short", m["bits"]["name"])
        mask = np.unpackbits(bits)[:count].astype(bool).reshape(shape)
        masks.append(LayerMaskTrack(m["layer_id"], m["t_start"], m["t_end"], mask))
    d = header["decoder"]
    weights = [_section(data, base, e).astype(np.float64) for e in d["weights"]]
    biases = [_section(data, base, e).astype(np.float64) for e in d["biases"]]
    dec = DecoderParams(weights, biases, int(d["code_dim"]), int(d["n_freq"]), bool(d["include_raw"]),
                        bool(d["use_position"]), bool(d["use_freq"]), d.get("activation", "relu"))
    rep = Representation(layers, codes, dec, masks, meta)
    problems = validate(rep)
    if problems:
        raise FormatError(f".pvr: invalid representation ({problems[0]})", "metadata", 16)
    return rep


def _entries(header):
    for entry in header["layers"]:
        yield entry["positions"]
        yield entry["confidence"]
        yield entry["codes"]
        yield entry["mask"]["bits"]
    yield from header["decoder"]["weights"]
    yield from header["decoder"]["biases"]


# -- JSON lines ---------------------------------------------------------------------

def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def read_jsonl(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON line ({exc.msg})", f"line {lineno}") from None
    return out
