import numpy as np
from scipy import stats

from bridgelab import _rng


def test_replication_windows_do_not_depend_on_blocking():
    whole = _rng.normals(7, _rng.PATHS, 0, 12, 9)
    parts = np.vstack([_rng.normals(7, _rng.PATHS, s, 4, 9) for s in (0, 4, 8)])
    assert np.array_equal(whole, parts)
    assert np.array_equal(whole[5], _rng.normals(7, _rng.PATHS, 5, 1, 9)[0])


def test_streams_and_seeds_differ():
    a = _rng.normals(1, _rng.PATHS, 0, 3, 5)
    assert not np.array_equal(a, _rng.normals(1, _rng.KS_SINH, 0, 3, 5))
    assert not np.array_equal(a, _rng.normals(2, _rng.PATHS, 0, 3, 5))


def test_uniforms_strictly_inside_unit_interval():
    u = _rng.uniforms(3, 0, 0, 2000, 17)
    assert u.min() > 0 and u.max() < 1
    # (k + 1/2) / 2**52 grid
    k = u * 2.0**52 - 0.5
    assert np.array_equal(k, np.round(k))


def test_normals_are_standard():
    z = _rng.normals(11, 0, 0, 50_000, 4).ravel()
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_empty_draws():
    assert _rng.normals(0, 0, 0, 0, 5).shape == (0, 5)
