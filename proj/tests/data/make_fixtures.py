"""Regenerates the numpy-written fixtures under tests/data.

Run from this directory: python3 make_fixtures.py
"""
import os
import zlib

import numpy as np

rng = np.random.default_rng(20240611)
os.makedirs("npy", exist_ok=True)

arrays = {
    "f4_2x3": np.arange(6, dtype="<f4").reshape(2, 3) / 4,
    "f8_vec": np.array([0.1, -2.5, 1e300, -0.0], dtype="<f8"),
    "i4_3d": np.arange(-12, 12, dtype="<i4").reshape(2, 3, 4),
    "u1_mask": np.array([[0, 1, 255], [2, 3, 4]], dtype="|u1"),
    "i8_scalar": np.array(42, dtype="<i8"),
    "b1_flags": np.array([True, False, True], dtype="|b1"),
    "u8_empty": np.zeros((0, 4), dtype="<u8"),
}
with open("npy/checksums.tsv", "w") as index:
    for name, a in arrays.items():
        np.save(f"npy/{name}.npy", a)
        with open(f"npy/{name}.npy", "rb") as f:
            index.write(f"{name}.npy\t{zlib.crc32(f.read())}\n")

# Format 2.0 header, as numpy writes for very wide dtypes.
with open("npy/f8_v2.npy", "wb") as f:
    np.lib.format.write_array(f, np.array([[1.5, 2.5]], dtype="<f8"), version=(2, 0))

# Three-record corpus shaped like the adapter's output: float32 latents and uint8 masks.
os.makedirs("corpus/latents", exist_ok=True)
os.makedirs("corpus/masks", exist_ok=True)
lines, sums = [], []
for i in range(3):
    rid = f"fixture_{i}"
    latent = rng.normal(size=(4, 4, 2)).astype("<f4")
    mask = rng.integers(0, 3, size=(8, 8)).astype("|u1")
    mask[0, 0] = 255
    np.save(f"corpus/latents/{rid}.npy", latent)
    np.save(f"corpus/masks/{rid}.npy", mask)
    lines.append(f"latents/{rid}.npy\tmasks/{rid}.npy\t{rid}\n")
    for path in (f"corpus/latents/{rid}.npy", f"corpus/masks/{rid}.npy"):
        with open(path, "rb") as f:
            sums.append(f"{path[len('corpus/'):]}\t{zlib.crc32(f.read())}\n")
with open("corpus/manifest.tsv", "w") as f:
    f.writelines(lines)
with open("corpus/checksums.tsv", "w") as f:
    f.writelines(sums)
