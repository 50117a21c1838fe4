"""Content digests used for provenance tracking.

Every artifact that flows between stages (classifier weights, latents,
reconstructions, rendered PNGs) carries a hex digest so downstream code can
assert it is looking at the thing it was produced from.
"""

import hashlib

import numpy as np
import torch


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_array(arr) -> str:
    a = np.ascontiguousarray(np.asarray(arr))
    h = hashlib.sha256()
    h.update(str(a.dtype).encode())
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


def digest_state_dict(state_dict: dict) -> str:
    """Digest of a torch state dict, independent of in-memory layout."""
    h = hashlib.sha256()
    for name in sorted(state_dict):
        t = state_dict[name]
        h.update(name.encode())
        if isinstance(t, torch.Tensor):
            arr = t.detach().cpu().contiguous().numpy()
            h.update(str(arr.dtype).encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        else:
            h.update(repr(t).encode())
    return h.hexdigest()


def digest_module(module: torch.nn.Module) -> str:
    return digest_state_dict(module.state_dict())
