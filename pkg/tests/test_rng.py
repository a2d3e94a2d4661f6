import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fireworks.rng import philox4x32, seed_to_key, uniforms

# Known-answer vectors published with the Random123 library (Philox4x32-10).
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF),
     (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(np.array(ctr, dtype=np.uint32), key)
    assert tuple(int(v) for v in out) == expected


def test_philox_vectorized_matches_scalar():
    ctrs = np.array([k[0] for k in KAT[:1]] * 3, dtype=np.uint32)
    ctrs[1, 0] = 7
    batch = philox4x32(ctrs, (0, 0))
    for i in range(3):
        assert np.array_equal(batch[i], philox4x32(ctrs[i], (0, 0)))


def test_seed_range():
    assert seed_to_key(2**64 - 1) == (0xFFFFFFFF, 0xFFFFFFFF)
    with pytest.raises(ValueError):
        seed_to_key(-1)
    with pytest.raises(ValueError):
        seed_to_key(2**64)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1))
def test_uniforms_in_unit_interval_and_addressable(seed, step):
    ids = np.array([0, 5, 9], dtype=np.uint64)
    u = uniforms(seed, ids, step, 0, 5)
    assert u.shape == (3, 5) and np.all((u >= 0) & (u < 1))
    # a particle's stream does not depend on which other particles are drawn with it
    assert np.array_equal(uniforms(seed, ids[1:2], step, 0, 5)[0], u[1])


def test_uniforms_pass_ks_test():
    u = uniforms(12345, np.arange(20000, dtype=np.uint64), 3, 1, 2).ravel()
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_streams_differ_by_step_and_event():
    ids = np.arange(4, dtype=np.uint64)
    a = uniforms(1, ids, 0, 0, 2)
    assert not np.array_equal(a, uniforms(1, ids, 1, 0, 2))
    assert not np.array_equal(a, uniforms(1, ids, 0, 1, 2))
    assert not np.array_equal(a, uniforms(2, ids, 0, 0, 2))
