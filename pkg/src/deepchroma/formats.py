"""Binary file formats for features, frame labels, and models.

All three formats are little-endian:

DCF1 (feature matrices: spectrograms, chromagrams, stacked features, saliency)
    magic ``DCF1`` | u32 n_frames | u32 dim | f32 fps | n_frames*dim f32, row-major

DCL1 (per-frame chord class labels)
    magic ``DCL1`` | u32 n_frames | n_frames u8 (0-24, 255 = excluded)

DCX1 (feed-forward models)
    magic ``DCX1`` | u32 n_layers | u32 input_dim | u32 context_frames |
    per layer: u32 in_dim | u32 out_dim | u8 activation code | f32 W row-major | f32 b
"""

import os
import struct
import tempfile

import numpy as np

DCF_MAGIC = b"DCF1"
DCL_MAGIC = b"DCL1"
DCX_MAGIC = b"DCX1"

EXCLUDED = 255

# activation codes shared with the network module
ACT_RELU = 0
ACT_SIGMOID = 1
ACT_SOFTMAX = 2
ACT_IDENTITY = 3
_ACT_CODES = (ACT_RELU, ACT_SIGMOID, ACT_SOFTMAX, ACT_IDENTITY)


class FormatError(ValueError):
    """Raised for bad magic bytes, truncation, or inconsistent headers."""


def write_bytes_atomic(path, data):
    """Write ``data`` to ``path`` via a temp file in the same directory.

    The rename happens only after a successful write, so a failure never
    leaves a partial file at the destination.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError("truncated file while reading %s" % what)
    return data


def write_dcf(path, data, fps=10.0):
    """Write a 2-d float array as a DCF1 feature file."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("expected a 2-d array, got shape %s" % (data.shape,))
    n_frames, dim = data.shape
    header = DCF_MAGIC + struct.pack("<IIf", n_frames, dim, float(fps))
    write_bytes_atomic(path, header + data.tobytes(order="C"))


def read_dcf(path):
    """Read a DCF1 file. Returns ``(data, fps)`` with float32 data."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DCF_MAGIC:
            raise FormatError("bad magic %r, expected %r" % (magic, DCF_MAGIC))
        n_frames, dim, fps = struct.unpack("<IIf", _read_exact(fh, 12, "header"))
        raw = _read_exact(fh, 4 * n_frames * dim, "feature data")
        if fh.read(1):
            raise FormatError("trailing bytes after feature data")
    data = np.frombuffer(raw, dtype="<f4").reshape(n_frames, dim)
    return data.copy(), float(fps)


def write_dcl(path, labels):
    """Write per-frame class labels (0-24 or 255) as a DCL1 file."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("expected a 1-d label sequence")
    arr = labels.astype(np.uint8)
    if not np.array_equal(arr, labels):
        raise ValueError("labels must be integers in [0, 255]")
    valid = (arr <= 24) | (arr == EXCLUDED)
    if not valid.all():
        raise ValueError("labels must be 0-24 or 255")
    header = DCL_MAGIC + struct.pack("<I", len(arr))
    write_bytes_atomic(path, header + arr.tobytes())


def read_dcl(path):
    """Read a DCL1 label file into a uint8 array."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DCL_MAGIC:
            raise FormatError("bad magic %r, expected %r" % (magic, DCL_MAGIC))
        (n_frames,) = struct.unpack("<I", _read_exact(fh, 4, "header"))
        raw = _read_exact(fh, n_frames, "labels")
        if fh.read(1):
            raise FormatError("trailing bytes after labels")
    labels = np.frombuffer(raw, dtype=np.uint8).copy()
    bad = (labels > 24) & (labels != EXCLUDED)
    if bad.any():
        raise FormatError("label value out of range")
    return labels


def write_dcx(path, layers, input_dim, context_frames):
    """Write model layers as a DCX1 file.

    ``layers`` is a sequence of ``(W, b, activation_code)`` with W shaped
    (out_dim, in_dim). Parameters are stored as float32.
    """
    if not layers:
        raise ValueError("model must have at least one layer")
    parts = [DCX_MAGIC, struct.pack("<III", len(layers), int(input_dim),
                                    int(context_frames))]
    prev = int(input_dim)
    for W, b, act in layers:
        W = np.asarray(W, dtype=np.float32)
        b = np.asarray(b, dtype=np.float32)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ValueError("layer shapes inconsistent: W %s, b %s"
                             % (W.shape, b.shape))
        if W.shape[1] != prev:
            raise ValueError("layer input dim %d does not chain from %d"
                             % (W.shape[1], prev))
        if act not in _ACT_CODES:
            raise ValueError("unknown activation code %r" % (act,))
        parts.append(struct.pack("<IIB", W.shape[1], W.shape[0], act))
        parts.append(W.tobytes(order="C"))
        parts.append(b.tobytes())
        prev = W.shape[0]
    write_bytes_atomic(path, b"".join(parts))


def read_dcx(path):
    """Read a DCX1 file. Returns ``(layers, input_dim, context_frames)``.

    ``layers`` is a list of ``(W, b, activation_code)`` float32 arrays.
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DCX_MAGIC:
            raise FormatError("bad magic %r, expected %r" % (magic, DCX_MAGIC))
        n_layers, input_dim, context_frames = struct.unpack(
            "<III", _read_exact(fh, 12, "header"))
        if n_layers == 0:
            raise FormatError("model has no layers")
        layers = []
        prev = input_dim
        for i in range(n_layers):
            in_dim, out_dim, act = struct.unpack(
                "<IIB", _read_exact(fh, 9, "layer %d header" % i))
            if in_dim != prev:
                raise FormatError("layer %d input dim %d does not chain from %d"
                                  % (i, in_dim, prev))
            if act not in _ACT_CODES:
                raise FormatError("layer %d has unknown activation code %d"
                                  % (i, act))
            W = np.frombuffer(
                _read_exact(fh, 4 * in_dim * out_dim, "layer %d weights" % i),
                dtype="<f4").reshape(out_dim, in_dim).copy()
            b = np.frombuffer(
                _read_exact(fh, 4 * out_dim, "layer %d bias" % i),
                dtype="<f4").copy()
            layers.append((W, b, int(act)))
            prev = out_dim
        if fh.read(1):
            raise FormatError("trailing bytes after last layer")
    return layers, int(input_dim), int(context_frames)
