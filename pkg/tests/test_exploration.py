import numpy as np
import pytest

from prefspace import behaviors as bh
from prefspace import exploration as xp


@pytest.fixture(scope="module")
def db():
    return bh.generate_database("visual", config=bh.GeneratorConfig(n=300, seed=4))


def make_user(seed=0, **kw):
    return xp.sample_user(k=6, utility_dims=3, seed=seed, **kw)


def test_omega_star_is_unit():
    u = make_user(7)
    assert np.linalg.norm(u.omega_star) == pytest.approx(1.0)


def test_explored_count_is_quantile_exact(db):
    user = make_user(1, explore_frac=0.2)
    pages = xp.simulate_session(user, db, pages=3, page_size=100)
    for p in pages:
        assert len(p.explored) == 20
        p.check_partition()


def test_noiseless_limit_is_top_q(db):
    user = make_user(2, explore_temp=0.0, explore_frac=0.2)
    pages = xp.simulate_session(user, db, pages=2, page_size=50)
    for p in pages:
        scores = {i: float(user.utility(db[i].latent)) for i in p.presented}
        top = set(sorted(p.presented, key=lambda i: scores[i], reverse=True)[:10])
        assert set(p.explored) == top


def test_explored_mean_utility_exceeds_ignored(db):
    user = make_user(7)
    pages = xp.simulate_session(user, db, pages=10, page_size=100)
    ex = np.concatenate([user.utility(db.latent_matrix(p.explored)) for p in pages])
    ig = np.concatenate([user.utility(db.latent_matrix(p.ignored)) for p in pages])
    assert ex.mean() > ig.mean()


def test_session_deterministic_given_seed(db):
    user = make_user(5)
    a = xp.simulate_session(user, db, pages=4, page_size=60)
    b = xp.simulate_session(user, db, pages=4, page_size=60)
    for pa, pb in zip(a, b):
        assert pa.presented == pb.presented and pa.explored == pb.explored


def test_page_size_validation(db):
    with pytest.raises(ValueError):
        xp.simulate_session(make_user(0), db, pages=1, page_size=len(db) + 1)


def test_triplet_enumeration_small_page():
    page = xp.ExplorationPage(page_id=0, presented=[1, 2, 3], explored=[1, 2], ignored=[3])
    rng = np.random.default_rng(0)
    trips = xp.sample_triplets([page], 200, rng)
    combos = {(t.anchor_id, t.positive_id, t.negative_id) for t in trips}
    # Ignored cell has one item: only the explored branch is feasible.
    assert combos <= {(1, 2, 3), (2, 1, 3)}
    assert all(t.anchor_id != t.positive_id for t in trips)


def test_time_linear_weights():
    pages = [
        xp.ExplorationPage(page_id=i, presented=[2 * i, 2 * i + 1],
                           explored=[2 * i], ignored=[2 * i + 1])
        for i in range(4)
    ]
    assert xp.triplet_weight(3, 4, "time_linear") == 1.0
    assert xp.triplet_weight(0, 4, "time_linear") == 0.25
    assert xp.triplet_weight(0, 4, "uniform") == 1.0


def test_page_selection_frequency():
    pages = [
        xp.ExplorationPage(page_id=0, presented=[0, 1, 2, 3], explored=[0, 1], ignored=[2, 3]),
        xp.ExplorationPage(page_id=1, presented=[4, 5, 6, 7], explored=[4, 5], ignored=[6, 7]),
    ]
    rng = np.random.default_rng(123)
    trips = xp.sample_triplets(pages, 10_000, rng)
    frac0 = sum(1 for t in trips if t.page_id == 0) / len(trips)
    assert 0.49 <= frac0 <= 0.51


def test_sampler_requires_contrastive_pages():
    page = xp.ExplorationPage(page_id=0, presented=[0, 1], explored=[0, 1], ignored=[])
    with pytest.raises(ValueError):
        xp.sample_triplets([page], 4, np.random.default_rng(0))


def test_session_log_roundtrip(tmp_path, db):
    user = make_user(3)
    pages = xp.simulate_session(user, db, pages=5, page_size=40)
    path = tmp_path / "log.jsonl"
    xp.export_session_log(pages, path)
    back = xp.ingest_session_log(path, db)
    assert len(back) == 5
    for pa, pb in zip(pages, back):
        assert pa.presented == pb.presented
        assert pa.explored == pb.explored
        assert pa.ignored == pb.ignored
        assert pa.explore_order == pb.explore_order
        pb.check_partition()


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert xp.ingest_session_log(path) == []


def test_ingest_unknown_id_names_id_and_line(tmp_path, db):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"page_id": 0, "presented": [0, 99999], "explored": [0]}\n')
    with pytest.raises(xp.SessionLogError) as ei:
        xp.ingest_session_log(path, db)
    assert ei.value.lineno == 1
    assert "99999" in str(ei.value)


def test_ingest_overlap_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"page_id": 0, "presented": [0, 1], "explored": [0, 7]}\n')
    with pytest.raises(xp.SessionLogError):
        xp.ingest_session_log(path)


def test_population_pooling(db):
    users, pages = xp.simulate_population(db, n_users=3, pages_per_user=2,
                                          page_size=30, base_seed=11)
    assert len(users) == 3 and len(pages) == 6
    assert [p.page_id for p in pages] == list(range(6))
    omegas = {tuple(u.omega_star) for u in users}
    assert len(omegas) == 3
