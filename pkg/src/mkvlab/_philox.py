"""Counter-based random numbers for reproducible parallel simulation.

This is a vectorized numpy implementation of the Philox-4x32-10 keyed
permutation. Each 128-bit counter block maps to four 32-bit words, which
become two standard normals via the inverse CDF. A block's value depends
only on (key, counter), never on evaluation order, so any slice of the
noise field can be computed independently: streams are addressed by
(particle, step, component) and the result is bitwise identical for any
chunking or thread count.

Counter layout (four 32-bit words): (block_lo, block_hi, step, tag)
where block = lane_index // 2 and lane_index = particle * width + component.
Key layout: (seed_lo, seed_hi). The tag word separates usages, so e.g.
initial-condition draws can never collide with increment draws.
"""

import numpy as np
from scipy.special import ndtri

from .exceptions import ValidationError

# multipliers and key schedule constants of the 4x32 variant
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_ROUNDS = 10

TAG_INCREMENT = 0
TAG_INITIAL = 1

_MAX_SEED = 2**64


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)):
        raise ValidationError("seed must be an integer, got %r" % (seed,))
    if not 0 <= seed < _MAX_SEED:
        raise ValidationError("seed must lie in [0, 2**64), got %r" % (seed,))


def philox4x32(x0, x1, x2, x3, k0, k1):
    """Apply the 10-round permutation to uint64-held 32-bit words.

    All inputs are numpy uint64 arrays (or scalars) whose values fit in
    32 bits. Returns four uint64 arrays with 32-bit values.
    """
    for r in range(_ROUNDS):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0
    return x0, x1, x2, x3


def _uniforms_from_blocks(o0, o1, o2, o3, start, count):
    """Interleave block outputs into uniforms in open (0, 1).

    Lane 2i draws from words (o0, o1) of block i, lane 2i+1 from
    (o2, o3); the slice [start, start + count) of the interleave is
    returned. 53 significant bits, endpoints excluded.
    """
    u_even = (o0 << np.uint64(32)) | o1
    u_odd = (o2 << np.uint64(32)) | o3
    n_blocks = o0.shape[-1]
    lanes = np.empty(o0.shape[:-1] + (2 * n_blocks,), dtype=np.uint64)
    lanes[..., 0::2] = u_even
    lanes[..., 1::2] = u_odd
    lanes = lanes[..., start:start + count]
    return ((lanes >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)


def normal_grid(seed, step_indices, n_lanes, tag=TAG_INCREMENT,
                lane_offset=0):
    """Standard normals for a block of steps.

    Returns an array of shape (len(step_indices), n_lanes); entry (i, L)
    is the draw for lane lane_offset + L at step step_indices[i]. Lane
    indices belong to (particle, component) = divmod(lane, width) under
    the caller's width. A lane's value depends only on its own index,
    the step, the tag and the seed, so generating a lane range in chunks
    reproduces the full-range output bit for bit.
    """
    _check_seed(seed)
    step_indices = np.asarray(step_indices, dtype=np.uint64)
    if step_indices.ndim != 1:
        raise ValidationError("step_indices must be one-dimensional")
    if n_lanes <= 0:
        raise ValidationError("n_lanes must be positive")
    if lane_offset < 0:
        raise ValidationError("lane_offset must be nonnegative")
    first_block = lane_offset // 2
    last_block = (lane_offset + n_lanes - 1) // 2
    blocks = np.arange(first_block, last_block + 1, dtype=np.uint64)
    n_blocks = len(blocks)
    x0 = np.broadcast_to(blocks & _MASK32, (len(step_indices), n_blocks))
    x1 = np.broadcast_to(blocks >> np.uint64(32), x0.shape)
    x2 = np.broadcast_to(step_indices[:, None] & _MASK32, x0.shape)
    x3 = np.full(x0.shape, np.uint64(tag))
    k0 = np.uint64(seed) & _MASK32
    k1 = (np.uint64(seed) >> np.uint64(32)) & _MASK32
    o0, o1, o2, o3 = philox4x32(
        np.ascontiguousarray(x0), np.ascontiguousarray(x1),
        np.ascontiguousarray(x2), x3, k0, k1)
    return ndtri(_uniforms_from_blocks(o0, o1, o2, o3,
                                       lane_offset - 2 * first_block,
                                       n_lanes))


def normals(seed, n_lanes, step=0, tag=TAG_INCREMENT):
    """Standard normals for all lanes of a single step."""
    return normal_grid(seed, [step], n_lanes, tag)[0]
