import logging
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hirefair.retrieval import (
    DIRECTIONS,
    PooledScore,
    RetrievalError,
    ScoreRow,
    SimilarityRecord,
    SwapExclusion,
    cosine,
    direction_of,
    directional_exclusion,
    exclusion,
    non_uniformity,
    rank_resumes,
    read_score_table,
    write_score_table,
)

# ---------------------------------------------------------------------------
# independent oracle: exhaustive re-ranking
# ---------------------------------------------------------------------------

def exclusion_bruteforce(original_scores: dict[str, float],
                         perturbed_scores: dict[str, float], n: int) -> float:
    """Literal re-ranking: substitute one perturbed resume at a time, sort the
    substituted pool, recompute competition ranks from scratch, count drops."""
    def ranks(scores: dict[str, float]) -> dict[str, int]:
        return {rid: 1 + sum(1 for other, s in scores.items()
                             if other != rid and s > scores[rid])
                for rid in scores}

    original_ranks = ranks(original_scores)
    top = [rid for rid, r in original_ranks.items() if r <= n]
    excluded = 0
    for rid in top:
        pool = dict(original_scores)
        pool[rid] = perturbed_scores[rid]
        if ranks(pool)[rid] > n:
            excluded += 1
    return excluded / len(top)


def records(scores: dict[str, float], job_id: str = "j"):
    return [SimilarityRecord(resume_id=k, job_id=job_id, score=v)
            for k, v in scores.items()]


# ---------------------------------------------------------------------------
# cosine
# ---------------------------------------------------------------------------

def test_cosine_identical_vectors():
    assert cosine([1.0, 2.0, 2.0], [1.0, 2.0, 2.0]) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal_unit_vectors():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_hand_computed():
    expected = 32.0 / (math.sqrt(14.0) * math.sqrt(77.0))
    assert cosine([1, 2, 3], [4, 5, 6]) == pytest.approx(expected, abs=1e-12)
    assert cosine([1, 2, 3], [4, 5, 6]) == pytest.approx(0.974631846, abs=1e-9)


def test_cosine_symmetry_and_bounds():
    rng = random.Random(7)
    for _ in range(50):
        u = [rng.uniform(-1, 1) for _ in range(8)]
        v = [rng.uniform(-1, 1) for _ in range(8)]
        c = cosine(u, v)
        assert c == cosine(v, u)
        assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12


def test_cosine_errors():
    with pytest.raises(RetrievalError):
        cosine([1, 2], [1, 2, 3])
    with pytest.raises(RetrievalError):
        cosine([0.0, 0.0], [1.0, 0.0])


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def test_rank_simple():
    ranked = rank_resumes(records({"a": 0.9, "b": 0.5, "c": 0.1}))
    assert {e.resume_id: e.rank for e in ranked.entries} == {"a": 1, "b": 2, "c": 3}


def test_rank_ties_share_and_skip():
    ranked = rank_resumes(records({"a": 0.9, "b": 0.9, "c": 0.1}))
    assert {e.resume_id: e.rank for e in ranked.entries} == {"a": 1, "b": 1, "c": 3}


def test_rank_single():
    ranked = rank_resumes(records({"only": 0.4}))
    assert ranked.entries[0].rank == 1


def test_rank_matches_definition_on_random_scores():
    rng = random.Random(11)
    for _ in range(30):
        scores = {f"r{i}": rng.choice([0.1, 0.25, 0.25, 0.4, 0.8]) for i in range(9)}
        ranked = rank_resumes(records(scores))
        for e in ranked.entries:
            strictly_above = sum(1 for s in scores.values() if s > e.score)
            assert e.rank == strictly_above + 1


def test_rank_duplicate_resume_error():
    recs = records({"a": 0.9}) + records({"a": 0.8})
    with pytest.raises(RetrievalError):
        rank_resumes(recs)


def test_rank_multiple_jobs_error():
    recs = records({"a": 0.9}, "j1") + records({"b": 0.8}, "j2")
    with pytest.raises(RetrievalError):
        rank_resumes(recs)


def test_top_n_tie_at_boundary_admits_all():
    ranked = rank_resumes(records({"a": 0.9, "b": 0.5, "c": 0.5, "d": 0.1}))
    top = ranked.top_n(2)
    assert top.members == {"a", "b", "c"}
    assert len(top.members) > top.n


# ---------------------------------------------------------------------------
# exclusion
# ---------------------------------------------------------------------------

def test_exclusion_identity_perturbation_is_zero():
    scores = {"a": 0.9, "b": 0.8, "c": 0.7}
    ranked = rank_resumes(records(scores))
    assert exclusion(ranked, scores, 2) == 0.0


def test_exclusion_spec_example():
    ranked = rank_resumes(records({"a": 0.9, "b": 0.8, "c": 0.7}))
    perturbed = {"a": 0.65, "b": 0.8, "c": 0.7}
    assert exclusion(ranked, perturbed, 2) == 0.5


def test_exclusion_all_dropped():
    scores = {f"r{i}": 1.0 - i / 10 for i in range(8)}
    ranked = rank_resumes(records(scores))
    floor = min(scores.values()) - 1.0
    perturbed = {rid: floor for rid in scores}
    assert exclusion(ranked, perturbed, 5) == 1.0


def test_exclusion_missing_perturbed_scores():
    ranked = rank_resumes(records({"a": 0.9, "b": 0.8}))
    with pytest.raises(RetrievalError, match="missing"):
        exclusion(ranked, {"a": 0.5}, 2)


def test_exclusion_n_validation():
    ranked = rank_resumes(records({"a": 0.9}))
    with pytest.raises(RetrievalError):
        exclusion(ranked, {"a": 0.9}, 0)


def test_exclusion_matches_bruteforce_oracle():
    rng = random.Random(4242)
    for _ in range(300):
        size = rng.randint(1, 8)
        scores = {f"r{i}": round(rng.uniform(0, 1), 6) for i in range(size)}
        perturbed = {f"r{i}": round(rng.uniform(0, 1), 6) for i in range(size)}
        n = rng.randint(1, size)
        ranked = rank_resumes(records(scores))
        assert exclusion(ranked, perturbed, n) == exclusion_bruteforce(scores, perturbed, n)


def test_exclusion_fixed_membership_monotone_in_threshold():
    """With the top-set membership held fixed, raising the rank threshold
    can only keep more perturbed resumes inside."""
    rng = random.Random(99)
    for _ in range(100):
        size = rng.randint(2, 10)
        scores = {f"r{i}": round(rng.uniform(0, 1), 6) for i in range(size)}
        perturbed = {f"r{i}": round(rng.uniform(0, 1), 6) for i in range(size)}
        ranked = rank_resumes(records(scores))
        n = rng.randint(1, size - 1)
        top = [e for e in ranked.entries if e.rank <= n]

        def excluded_at(threshold):
            count = 0
            for e in top:
                new_rank = 1 + sum(1 for o in ranked.entries
                                   if o.resume_id != e.resume_id
                                   and o.score > perturbed[e.resume_id])
                count += new_rank > threshold
            return count

        assert excluded_at(n + 1) <= excluded_at(n)


# ---------------------------------------------------------------------------
# rank invariance under strictly increasing transforms
# ---------------------------------------------------------------------------

def monotone_transforms():
    return [lambda s: 3.5 * s + 1.25, lambda s: s ** 3 + s, lambda s: math.atan(s) + s]


def test_metrics_invariant_under_monotone_transform():
    rng = random.Random(31337)
    for _ in range(40):
        size = rng.randint(3, 12)
        scores = {f"r{i}": round(rng.uniform(-0.5, 1), 6) for i in range(size)}
        perturbed = {f"r{i}": round(rng.uniform(-0.5, 1), 6) for i in range(size)}
        n = rng.randint(1, size)
        base_ranked = rank_resumes(records(scores))
        base_excl = exclusion(base_ranked, perturbed, n)
        for f in monotone_transforms():
            t_ranked = rank_resumes(records({k: f(v) for k, v in scores.items()}))
            assert [(e.resume_id, e.rank) for e in t_ranked.entries] == \
                   [(e.resume_id, e.rank) for e in base_ranked.entries]
            assert t_ranked.top_n(n).members == base_ranked.top_n(n).members
            t_excl = exclusion(t_ranked, {k: f(v) for k, v in perturbed.items()}, n)
            assert t_excl == base_excl


# ---------------------------------------------------------------------------
# non-uniformity
# ---------------------------------------------------------------------------

def balanced_pool():
    """40 members, scores descending in an order that keeps every group count
    equal in any prefix of multiples of four."""
    groups = ["FB", "FW", "MB", "MW"]
    return [PooledScore(member_id=f"m{i}", group=groups[i % 4], score=1.0 - i * 0.01)
            for i in range(40)]


def test_non_uniformity_uniform_counts():
    results = non_uniformity({"j": balanced_pool()}, x=50.0)
    (res,) = results
    assert res.k == 20
    assert res.counts == {"FB": 5, "FW": 5, "MB": 5, "MW": 5}
    assert res.chi2 == 0.0 and res.p == 1.0 and not res.flag


def test_non_uniformity_spec_counts():
    # top 25% of 160 = 40 selected with group layout 20/10/5/5
    members = []
    layout = [("FB", 20), ("FW", 10), ("MB", 5), ("MW", 5)]
    score = 1.0
    for group, count in layout:
        for i in range(count):
            members.append(PooledScore(f"{group}{i}", group, score))
            score -= 0.001
    # remaining 120 below the cut, 30 per group to keep the pool balanced
    remaining = {"FB": 40 - 20, "FW": 40 - 10, "MB": 40 - 5, "MW": 40 - 5}
    for group, count in remaining.items():
        for i in range(count):
            members.append(PooledScore(f"low{group}{i}", group, score))
            score -= 0.001
    (res,) = non_uniformity({"j": members}, x=25.0)
    assert res.counts == {"FB": 20, "FW": 10, "MB": 5, "MW": 5}
    assert res.chi2 == pytest.approx(15.0)
    assert res.p == pytest.approx(0.00182, abs=1e-5)
    assert res.flag


def test_non_uniformity_pooled_mode_sums_counts():
    pool = balanced_pool()
    jobs = {"j1": pool, "j2": pool}
    occupation_of = {"j1": "Data Analyst", "j2": "Data Analyst"}
    sep = non_uniformity(jobs, x=50.0, mode="separated")
    pooled = non_uniformity(jobs, x=50.0, mode="pooled", occupation_of=occupation_of)
    assert len(sep) == 2 and len(pooled) == 1
    assert pooled[0].unit_id == "Data Analyst"
    assert pooled[0].counts == {"FB": 10, "FW": 10, "MB": 10, "MW": 10}
    assert pooled[0].k == 40


def test_non_uniformity_underpowered_warning(caplog):
    pool = balanced_pool()
    with caplog.at_level(logging.WARNING):
        (res,) = non_uniformity({"j": pool}, x=5.0)  # k = ceil(2) = 2 < 4
    assert res.k == 2
    assert res.underpowered
    assert any("underpowered" in r.message for r in caplog.records)


def test_non_uniformity_validates_inputs():
    pool = balanced_pool()
    with pytest.raises(RetrievalError):
        non_uniformity({"j": pool}, x=0.0)
    with pytest.raises(RetrievalError):
        non_uniformity({"j": pool}, x=101.0)
    with pytest.raises(RetrievalError):
        non_uniformity({"j": pool}, x=10.0, mode="pooled")  # no occupation map
    unbalanced = pool[:-1]
    with pytest.raises(RetrievalError, match="four group versions"):
        non_uniformity({"j": unbalanced}, x=10.0)


def test_non_uniformity_counts_invariant_under_monotone_transform():
    pool = [PooledScore(f"m{i}", ["FB", "FW", "MB", "MW"][i % 4],
                        round(random.Random(i).uniform(0, 1), 6))
            for i in range(80)]
    base = non_uniformity({"j": pool}, x=25.0)[0]
    for f in monotone_transforms():
        mapped = [PooledScore(p.member_id, p.group, f(p.score)) for p in pool]
        res = non_uniformity({"j": mapped}, x=25.0)[0]
        assert res.counts == base.counts
        assert res.flag == base.flag


# ---------------------------------------------------------------------------
# directional exclusion
# ---------------------------------------------------------------------------

def test_direction_partition():
    assert direction_of("MW", "FW") == "M->F"
    assert direction_of("MB", "FB") == "M->F"
    assert direction_of("FW", "MW") == "F->M"
    assert direction_of("MW", "MB") == "W->B"
    assert direction_of("FB", "FW") == "B->W"
    assert direction_of("MW", "FB") is None  # diagonal swap: not a direction


def test_directions_cover_all_gender_race_pairs():
    pairs = {pair for pairs in DIRECTIONS.values() for pair in pairs}
    assert len(pairs) == 8


def test_directional_exclusion_identity_grid():
    grid = [SwapExclusion(source=s, target=t, value=0.0)
            for pairs in DIRECTIONS.values() for s, t in pairs]
    results = directional_exclusion(grid)
    assert {r.direction for r in results} == set(DIRECTIONS)
    assert all(r.value == 0.0 for r in results)


def test_directional_exclusion_averages_constituents():
    grid = [
        SwapExclusion("MW", "FW", 0.2, "j1"),
        SwapExclusion("MB", "FB", 0.4, "j1"),
        SwapExclusion("FW", "MW", 0.1, "j1"),
        SwapExclusion("FB", "MB", 0.1, "j1"),
    ]
    results = {r.direction: r for r in directional_exclusion(grid)}
    assert results["M->F"].value == pytest.approx(0.3)
    assert results["M->F"].samples == 2
    assert results["F->M"].value == pytest.approx(0.1)


def test_directional_exclusion_rejects_diagonal():
    with pytest.raises(RetrievalError):
        directional_exclusion([SwapExclusion("MW", "FB", 0.5)])


# ---------------------------------------------------------------------------
# score table persistence
# ---------------------------------------------------------------------------

def test_score_table_round_trip(tmp_path):
    rows = [
        ScoreRow("j1", "r1", "name:FW", 0.123456789123456),
        ScoreRow("j1", "r2", "swap:MW->FW", -0.5),
        ScoreRow("j2", "r1", "name:FW", 1.0),
    ]
    path = tmp_path / "scores.csv"
    write_score_table(rows, path)
    assert read_score_table(path) == rows


def test_score_table_header_check(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope,nope\n1,2\n")
    with pytest.raises(RetrievalError):
        read_score_table(path)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=12, unique=True))
@settings(max_examples=60, deadline=None)
def test_exclusion_bounds(scores):
    table = {f"r{i}": s for i, s in enumerate(scores)}
    perturbed = {k: -v for k, v in table.items()}
    ranked = rank_resumes(records(table))
    value = exclusion(ranked, perturbed, 2)
    assert 0.0 <= value <= 1.0
