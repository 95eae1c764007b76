"""Binary PPM (P6) image output, 8-bit, gamma-2.2 encoded from linear.

PPM keeps goldens byte-exact without an image library dependency.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

GAMMA = 2.2


def encode_srgb(pixels: np.ndarray) -> np.ndarray:
    """Linear [0,1] floats to gamma-2.2 bytes; grayscale is broadcast to RGB."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W) or (H, W, 3) pixels, got {arr.shape}")
    clipped = np.clip(arr, 0.0, 1.0)
    return np.rint(255.0 * clipped ** (1.0 / GAMMA)).astype(np.uint8)


def write_image(path, pixels: np.ndarray) -> Path:
    """Write linear pixels as a P6 PPM; byte-exact for identical input."""
    path = Path(path)
    data = encode_srgb(pixels)
    h, w = data.shape[:2]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return path


def read_image(path) -> np.ndarray:
    """Read a P6 PPM back to linear floats in [0,1], shape (H, W, 3)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    # header: magic, width, height, maxval tokens; '#' starts a comment
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos)
    return (data.reshape(h, w, 3).astype(np.float64) / maxval) ** GAMMA
