"""Counter-based random numbers (Philox4x32-10), vectorized over numpy arrays.

Every draw is a pure function of ``(key, counter)``, so a particle's
random stream depends only on the seed and its own indices, never on how
particles are split between workers.
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    ``counter`` is a uint32 array with last axis 4, ``key`` a pair of
    uint32.  Returns a uint32 array shaped like ``counter``.
    """
    c = np.asarray(counter, dtype=np.uint32)
    c0, c1, c2, c3 = (c[..., i].astype(np.uint64) for i in range(4))
    k0 = np.uint32(key[0])
    k1 = np.uint32(key[1])
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            p0 = _M0 * c0
            p1 = _M1 * c2
            hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
            hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
            c0 = hi1 ^ c1 ^ np.uint64(k0)
            c1 = lo1
            c2 = hi0 ^ c3 ^ np.uint64(k1)
            c3 = lo0
            k0 = np.uint32(k0 + _W0)
            k1 = np.uint32(k1 + _W1)
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def seed_to_key(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return (seed & 0xFFFFFFFF, seed >> 32)


def uniforms(seed, ids, step, event, n):
    """``n`` uniforms in ``[0, 1)`` per id, shape ``(len(ids), n)``.

    The stream is addressed by ``(id, step, event, block)``; each Philox
    block yields two 53-bit doubles.
    """
    ids = np.asarray(ids, dtype=np.uint64)
    key = seed_to_key(seed)
    nblocks = (n + 1) // 2
    ctr = np.zeros((len(ids), nblocks, 4), dtype=np.uint32)
    ctr[..., 0] = (ids & _MASK).astype(np.uint32)[:, None]
    ctr[..., 1] = np.uint32(step)
    ctr[..., 2] = np.uint32(event)
    ctr[..., 3] = np.arange(nblocks, dtype=np.uint32)[None, :]
    out = philox4x32(ctr, key).astype(np.uint64)
    a = out[..., 0::2] >> np.uint64(5)
    b = out[..., 1::2] >> np.uint64(6)
    u = (a * np.uint64(67108864) + b).astype(np.float64) / 9007199254740992.0
    return u.reshape(len(ids), -1)[:, :n]
