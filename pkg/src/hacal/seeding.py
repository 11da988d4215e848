"""Labeled random sub-streams derived from one master seed.

Every random draw in a trial comes from a generator keyed by
``(master_seed, label, *indices)``. Changing how many numbers one purpose
consumes therefore never shifts the draws of another purpose.
"""

import hashlib

import numpy as np

LABELS = ("channel", "mismatch", "noise", "beamformers", "solver")


def _label_words(label):
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def substream(master_seed, label, *indices):
    """Return an independent generator for ``label`` and integer ``indices``.

    Parameters
    ----------
    master_seed : int
        Non-negative seed, up to 64 bits.
    label : str
        Purpose tag, e.g. ``"channel"`` or ``"noise"``.
    *indices : int
        Extra non-negative keys such as the sweep point and trial index.
    """
    master_seed = int(master_seed)
    if master_seed < 0 or master_seed >= 2**64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    words = [master_seed & 0xFFFFFFFF, master_seed >> 32, *_label_words(label)]
    for index in indices:
        index = int(index)
        if index < 0:
            raise ValueError(f"stream indices must be non-negative, got {index}")
        words.extend([index & 0xFFFFFFFF, index >> 32])
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def trial_streams(master_seed, *indices):
    """Dictionary of generators, one per entry of :data:`LABELS`."""
    return {label: substream(master_seed, label, *indices) for label in LABELS}
