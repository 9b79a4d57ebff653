import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import betti_prefix, rank_pairs
from phpullback.datagen import gen_circle
from phpullback.filtration import DTM, Height, Rips, build_complex
from phpullback.geometry import PointCloud
from phpullback.persistence import (Diagram, PersistencePair, cap_infinite, default_cap, raw_pairs,
                                    read_diagram_csv, reduce, write_diagram_csv)

SQUARE = PointCloud([[0, 0], [1, 0], [1, 1], [0, 1]])


def test_vertices_only_degree0():
    X = PointCloud([[0, 0], [3, 0], [0, 3]])
    dgm = reduce(build_complex(X, Rips(1.0), 1), 0)
    assert len(dgm) == 3
    assert all(p.essential and p.birth == 0 for p in dgm.pairs)


def test_square_single_loop():
    dgm = reduce(build_complex(SQUARE, Rips(1.5), 2), 1)
    assert len(dgm) == 1
    p = dgm.pairs[0]
    assert (p.birth, p.death) == (1.0, pytest.approx(np.sqrt(2)))
    assert len(p.birth_simplex) == 2 and len(p.death_simplex) == 3


def test_square_matches_rank_oracle():
    cx = build_complex(SQUARE, Rips(1.5), 2)
    for k in (0, 1):
        finite, ess = raw_pairs(cx, k)
        assert (sorted(finite), sorted(ess)) == rank_pairs(cx, k)


def test_dense_circle_one_loop():
    X = gen_circle(60, jitter=1e-3, seed=0)
    _, dgm = (None, cap_infinite(reduce(build_complex(X, Rips(1.0), 2), 1), 1.0))
    life = np.array([p.lifespan for p in dgm.pairs])
    assert (life > 0.5).sum() == 1
    assert np.sort(life)[-2] < 0.2 if len(life) > 1 else True


def test_cap_examples():
    finite = Diagram([PersistencePair(1, (0, 1), (0, 1, 2), 0.2, 0.5)], 1)
    assert cap_infinite(finite, 1.0).pairs == finite.pairs
    inf = Diagram([PersistencePair(1, (0, 1), None, 0.3, np.inf)], 1)
    capped = cap_infinite(inf, 0.9)
    assert capped.pairs[0].death == 0.9 and capped.essential_cap == 0.9
    with pytest.raises(ValueError):
        cap_infinite(inf, 0.1)


def test_rfp_rips_cap_is_max_edge():
    from phpullback.datagen import gen_rfp
    cx = build_complex(gen_rfp(0.5, 3, 150), Rips(1.0), 2)
    assert default_cap(cx) == 1.0
    dgm = cap_infinite(reduce(cx, 1), default_cap(cx))
    assert dgm.capped and max(p.death for p in dgm.pairs) <= 1.0


def test_height_default_cap():
    X = PointCloud(np.random.default_rng(0).uniform(size=(10, 2)))
    cx = build_complex(X, Height((1, 0), 0.3), 2)
    assert default_cap(cx) == X.points[:, 0].max()


def test_degree_too_high_is_rejected():
    with pytest.raises(ValueError):
        reduce(build_complex(SQUARE, Rips(1.5), 1), 1)


small_clouds = st.builds(lambda seed, n: PointCloud(np.random.default_rng(seed).uniform(size=(n, 2))),
                         st.integers(0, 10 ** 7), st.integers(2, 8))
kinds = st.sampled_from([Rips(0.7), Rips(2.0), DTM(0.8, k_neighbors=1), Height((0.8, 0.6), 0.6)])


@given(small_clouds, kinds)
@settings(max_examples=60)
def test_reduction_matches_rank_oracle(X, kind):
    if isinstance(kind, DTM) and X.n < 2:
        return
    cx = build_complex(X, kind, 2)
    for k in (0, 1):
        finite, ess = raw_pairs(cx, k)
        assert (sorted(finite), sorted(ess)) == rank_pairs(cx, k)


@given(small_clouds)
@settings(max_examples=25)
def test_diagram_counts_match_betti_numbers(X):
    cx = build_complex(X, Rips(0.8), 2)
    for k in (0, 1):
        finite, ess = raw_pairs(cx, k)
        for upto in range(0, len(cx) + 1, 3):
            alive = sum(b < upto <= d for b, d in finite) + sum(b < upto for b in ess)
            assert alive == betti_prefix(cx, k, upto)


@given(small_clouds)
@settings(max_examples=25)
def test_simplex_count_bookkeeping(X):
    cx = build_complex(X, Rips(0.9), 3)
    births, deaths = {}, {}
    for k in (0, 1, 2):
        finite, ess = raw_pairs(cx, k)
        for b, d in finite:
            births[b] = k
            deaths[d] = k + 1
        for b in ess:
            births[b] = k
    for k in (0, 1, 2):
        n_k = int((cx.dims == k).sum())
        assert n_k == sum(v == k for v in births.values()) + sum(v == k for v in deaths.values())


def test_zero_lifespan_pairs_held_aside():
    X = PointCloud(np.random.default_rng(3).uniform(size=(12, 2)))
    dgm = reduce(build_complex(X, Rips(0.6), 2), 1)
    assert all(p.death > p.birth for p in dgm.pairs)
    assert all(p.death == p.birth for p in dgm.zero_pairs)


def _generic_cloud(seed=4, n=30):
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    rng = np.random.default_rng(seed)
    pts = 0.5 + 0.3 * np.column_stack([np.cos(th), np.sin(th)]) + rng.normal(scale=0.01, size=(n, 2))
    return PointCloud(pts)


def test_stability_smoke():
    X = _generic_cloud()
    eta = 1e-6
    Y = X.with_points(X.points + np.random.default_rng(1).uniform(-eta, eta, size=X.points.shape))
    a = cap_infinite(reduce(build_complex(X, Rips(1.0), 2), 1), 1.0).as_array()
    b = cap_infinite(reduce(build_complex(Y, Rips(1.0), 2), 1), 1.0).as_array()
    assert a.shape == b.shape
    assert np.abs(np.sort(a, 0) - np.sort(b, 0)).max() <= 10 * 2 * eta


def test_template_stable_under_tiny_perturbation():
    X = _generic_cloud(5)
    cx = build_complex(X, Rips(1.0), 2)
    assert cx.generic
    tmpl = lambda Z: sorted((p.birth_simplex, p.death_simplex) for p in reduce(build_complex(Z, Rips(1.0), 2), 1).pairs)
    rng = np.random.default_rng(2)
    for _ in range(5):
        Y = X.with_points(X.points + rng.uniform(-1e-8, 1e-8, size=X.points.shape))
        assert tmpl(Y) == tmpl(X)


def test_diagram_csv_roundtrip(tmp_path):
    X = _generic_cloud(6)
    dgm = cap_infinite(reduce(build_complex(X, Rips(1.0), 2), 1), 1.0)
    write_diagram_csv(dgm, tmp_path / "d.csv")
    back = read_diagram_csv(tmp_path / "d.csv")
    assert np.array_equal(back.as_array(), dgm.as_array())
    assert [p.death_simplex for p in back.pairs] == [p.death_simplex for p in dgm.pairs]
