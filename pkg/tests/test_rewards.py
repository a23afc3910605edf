"""Reward components, composition, and the warmup weight schedule.

The total-exactness check uses an independent Fraction dot product as the
oracle; expected repetition values were brute-forced by enumerating n-grams
on paper before being frozen here.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from perceptrl.facts import FactSet, extract_claimed_facts, extract_facts
from perceptrl.rewards import (
    ConfigError,
    CoverageThresholds,
    RewardBreakdown,
    RewardConfig,
    RewardWeights,
    ScheduleConfig,
    accuracy_reward,
    consistency_reward,
    coverage,
    discretize_coverage,
    repetition_reward,
    schedule_weights,
    score_rollout,
    total_reward,
)

WELL_FORMED = (
    "<description>a red circle with radius 5 cm</description>"
    "<think>the radius is 5 exactly so i double it</think>"
    "<answer>10</answer>"
)


# ---------- accuracy_reward ----------

@pytest.mark.parametrize(
    "answer,gold,policy,expected",
    [
        ("15", "15", "numeric", 1.0),
        ("15.00001", "15", "numeric", 1.0),   # within 1e-4 relative
        ("15.01", "15", "numeric", 0.0),      # outside 1e-4 relative
        ("the answer is 42", "42", "numeric", 1.0),
        ("1 then 2", "2", "numeric", 1.0),    # last numeric token wins
        ("no digits here", "15", "numeric", 0.0),
        ("B", "C", "choice-letter", 0.0),
        ("(B)", "b", "choice-letter", 1.0),
        ("a or B", "B", "choice-letter", 0.0),  # first single-letter word wins
        ("  Blue Square ", "blue square", "normalized-exact", 1.0),
        ("1/2", "0.5", "normalized-exact", 1.0),   # canonical spelling agrees
        ("blue", "red", "normalized-exact", 0.0),
        (None, "15", "numeric", 0.0),
        (None, "x", "normalized-exact", 0.0),
        ("", "x", "normalized-exact", 0.0),
    ],
)
def test_accuracy_reward(answer, gold, policy, expected):
    assert accuracy_reward(answer, gold, policy) == expected


def test_accuracy_reward_numeric_tolerance_scales_with_magnitude():
    # relative, not absolute: 1e-4 of 1e6 is 100
    assert accuracy_reward("1000050", "1000000", "numeric") == 1.0
    assert accuracy_reward("1000200", "1000000", "numeric") == 0.0


def test_accuracy_reward_rejects_unknown_policy():
    with pytest.raises(ConfigError):
        accuracy_reward("15", "15", "fuzzy")


def test_accuracy_reward_requires_gold():
    with pytest.raises(ValueError):
        accuracy_reward("15", "")


# ---------- coverage and discretization ----------

def test_coverage_fraction():
    keys = FactSet.from_phrases(["red circle", "radius 5", "blue square", "tall box"])
    segment = "a red circle with radius 5"
    assert coverage(keys, segment) == 0.5


def test_coverage_full_and_disjoint():
    keys = FactSet.from_phrases(["red", "circle"])
    assert coverage(keys, "red circle") == 1.0
    assert coverage(keys, "green triangle") == 0.0


def test_coverage_empty_keys_is_vacuous():
    assert coverage(FactSet.from_phrases([]), "anything") == 1.0
    assert coverage(FactSet.from_phrases([]), "") == 1.0


def test_coverage_monotone_in_segment():
    # appending text never removes a match, so coverage never decreases
    keys = FactSet.from_phrases(["red circle", "radius 5", "unit square"])
    parts = ["nothing", " red circle", " radius 5", " and a unit square"]
    segment = ""
    last = 0.0
    for part in parts:
        segment += part
        cov = coverage(keys, segment)
        assert cov >= last
        last = cov
    assert last == 1.0


@pytest.mark.parametrize(
    "cov,expected",
    [
        (1.0, 1.0),
        (0.8, 1.0),   # boundary inclusive at tau_hi
        (0.79, 0.5),
        (0.5, 0.5),
        (0.4, 0.5),   # boundary inclusive at tau_lo
        (0.39, 0.0),
        (0.0, 0.0),
    ],
)
def test_discretize_coverage_default_thresholds(cov, expected):
    assert discretize_coverage(cov, CoverageThresholds()) == expected


def test_discretize_is_step_function():
    # piecewise constant, jumps exactly at the two thresholds
    t = CoverageThresholds(tau_lo=0.4, tau_hi=0.8)
    grid = [i / 1000 for i in range(1001)]
    jumps = []
    for lo, hi in zip(grid, grid[1:]):
        if discretize_coverage(lo, t) != discretize_coverage(hi, t):
            jumps.append(hi)
    assert jumps == [0.4, 0.8]


def test_discretize_rejects_out_of_range():
    with pytest.raises(ValueError):
        discretize_coverage(1.5, CoverageThresholds())
    with pytest.raises(ValueError):
        discretize_coverage(-0.1, CoverageThresholds())


def test_thresholds_validate_ordering():
    with pytest.raises(ConfigError):
        CoverageThresholds(tau_lo=0.8, tau_hi=0.4)
    with pytest.raises(ConfigError):
        CoverageThresholds(tau_lo=0.5, tau_hi=0.5)
    with pytest.raises(ConfigError):
        CoverageThresholds(tau_lo=-0.1, tau_hi=0.8)


# ---------- repetition_reward ----------

def test_repetition_all_distinct_is_zero():
    assert repetition_reward("a b c d e f g") == 0.0


def test_repetition_known_value():
    # "a b c a b c a b c", n=3: distinct {abc, bca, cab} = 3 of 7 windows
    r = repetition_reward("a b c a b c a b c", 3)
    assert r == pytest.approx(-4 / 7, abs=1e-12)


def test_repetition_short_text_is_zero():
    assert repetition_reward("a b", 3) == 0.0
    assert repetition_reward("", 3) == 0.0


def test_repetition_never_negative_zero():
    r = repetition_reward("x y z", 3)
    assert r == 0.0
    assert math.copysign(1.0, r) == 1.0


def test_repetition_bounds_seeded():
    rng = random.Random(319)
    words = ["a", "b", "c", "dd", "5"]
    for _ in range(300):
        text = " ".join(rng.choice(words) for _ in range(rng.randrange(40)))
        r = repetition_reward(text, rng.choice([1, 2, 3, 4]))
        assert -1.0 <= r <= 0.0


def test_repetition_rejects_bad_order():
    with pytest.raises(ConfigError):
        repetition_reward("a b c", 0)


# ---------- consistency_reward ----------

def _facts(text: str) -> FactSet:
    return extract_facts(text)


def test_consistency_conflict_zeroes():
    claimed = _facts("the radius is 5")
    evidence = _facts("the radius is 7")
    assert consistency_reward(claimed, evidence) == 0.0


def test_consistency_empty_claims_scores_zero():
    assert consistency_reward(FactSet(), _facts("radius is 5")) == 0.0


def test_consistency_partial_support():
    claimed = _facts("the radius is 5 . the height is 3 . the width is 9")
    evidence = _facts("radius is 5 and height is 3")
    # width 9 is unsupported but nothing about width conflicts
    assert consistency_reward(claimed, evidence) == pytest.approx(2 / 3)


def test_consistency_full_support():
    claimed = _facts("the radius is 5")
    evidence = _facts("circle radius is 5 cm")
    assert consistency_reward(claimed, evidence) == 1.0


def test_consistency_categorical_conflict():
    claimed = _facts("the shape is square")
    evidence = _facts("the shape is circle")
    assert consistency_reward(claimed, evidence) == 0.0


def test_consistency_monotone_in_unsupported_claims():
    # each extra unsupported (non-conflicting) claim can only dilute the score
    evidence = _facts("radius is 5")
    base = _facts("the radius is 5")
    scores = [consistency_reward(base, evidence)]
    extra_subjects = ["height", "width", "depth"]
    claims = "the radius is 5"
    for i, subj in enumerate(extra_subjects, start=3):
        claims += f" . the {subj} is {i}"
        scores.append(consistency_reward(_facts(claims), evidence))
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert scores[0] == 1.0 and scores[-1] == pytest.approx(1 / 4)


def test_consistency_unit_mismatch_is_not_support():
    claimed = _facts("the length is 5 cm")
    evidence = _facts("the length is 5 mm")
    # same number, different unit: a clear conflict on the same subject
    assert consistency_reward(claimed, evidence) == 0.0


# ---------- weights, breakdown, schedule ----------

def test_weights_reject_negative_and_nonfinite():
    with pytest.raises(ConfigError):
        RewardWeights(acc=-0.1)
    with pytest.raises(ConfigError):
        RewardWeights(rep=float("nan"))
    with pytest.raises(ConfigError):
        RewardWeights(cons=float("inf"))


def test_weights_from_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        RewardWeights.from_dict({"acc": 1.0, "accuracy": 1.0})


def test_weights_ablated():
    w = RewardWeights().ablated(vkey=True, cons=True)
    assert w.as_tuple() == (1.0, 1.0, 0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        RewardWeights().ablated(nope=True)


def test_breakdown_total_is_exact_dot_product_seeded():
    # oracle: exact Fraction arithmetic on the same operands; the budget is
    # one ulp per accumulated product (each w*r rounds once, fsum once more)
    rng = random.Random(7811)
    for _ in range(500):
        comps = [rng.choice([0.0, 0.5, 1.0, -rng.random(), rng.random()]) for _ in range(6)]
        weights = RewardWeights(*[rng.uniform(0, 3) for _ in range(6)])
        bd = RewardBreakdown.build(*comps, weights=weights)
        exact = sum(
            (Fraction(w) * Fraction(r) for w, r in zip(weights.as_tuple(), comps)),
            Fraction(0),
        )
        budget = sum(
            (Fraction(math.ulp(w * r)) for w, r in zip(weights.as_tuple(), comps)),
            Fraction(0),
        )
        assert abs(Fraction(bd.total) - exact) <= budget


def test_breakdown_unit_weights_reproduce_unweighted_sum():
    rng = random.Random(5150)
    for _ in range(200):
        comps = [rng.choice([0.0, 0.5, 1.0, -rng.random()]) for _ in range(6)]
        bd = RewardBreakdown.build(*comps, weights=RewardWeights())
        assert bd.total == math.fsum(comps)


def test_schedule_endpoints_exact():
    cfg = ScheduleConfig()
    assert schedule_weights(0, 100, cfg) == cfg.start
    warmup = math.ceil(cfg.warmup_fraction * 100)
    assert schedule_weights(warmup, 100, cfg) == cfg.end
    assert schedule_weights(100, 100, cfg) == cfg.end


def test_schedule_midpoint_is_mean():
    cfg = ScheduleConfig()
    mid = schedule_weights(25, 100, cfg)  # warmup is 50 steps
    start, end = cfg.start.as_tuple(), cfg.end.as_tuple()
    for got, s, e in zip(mid.as_tuple(), start, end):
        assert got == pytest.approx((s + e) / 2)


def test_schedule_warmup_rounds_up():
    # warmup_fraction 0.5 of 7 steps: ceil(3.5) = 4, so step 3 still interpolates
    cfg = ScheduleConfig()
    assert schedule_weights(3, 7, cfg) != cfg.end
    assert schedule_weights(4, 7, cfg) == cfg.end


def test_schedule_interpolation_stays_nonnegative():
    cfg = ScheduleConfig(
        start=RewardWeights(acc=0.0, fmt=2.0),
        end=RewardWeights(acc=2.0, fmt=0.0),
        warmup_fraction=1.0,
    )
    for step in range(0, 101):
        w = schedule_weights(step, 100, cfg)
        assert all(v >= 0 for v in w.as_tuple())


def test_schedule_validates_inputs():
    with pytest.raises(ConfigError):
        schedule_weights(0, 0, ScheduleConfig())
    with pytest.raises(ConfigError):
        schedule_weights(-1, 10, ScheduleConfig())
    with pytest.raises(ConfigError):
        schedule_weights(11, 10, ScheduleConfig())
    with pytest.raises(ConfigError):
        ScheduleConfig(warmup_fraction=0.0)
    with pytest.raises(ConfigError):
        ScheduleConfig(warmup_fraction=1.5)


def test_default_schedule_shape():
    cfg = ScheduleConfig()
    assert cfg.start.as_tuple() == (0.5, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert cfg.end.as_tuple() == (1.0, 1.0, 0.5, 0.5, 1.0, 0.5)
    assert cfg.warmup_fraction == 0.5


# ---------- score_rollout and total_reward ----------

def test_score_rollout_ideal_case():
    score = score_rollout(
        WELL_FORMED,
        "10",
        match_policy="numeric",
        visual_keys=["red circle", "radius 5"],
        textual_keys=["radius"],
        question="what is the diameter of a circle with radius 5 cm ?",
    )
    bd = score.breakdown
    assert bd.r_acc == 1.0
    assert bd.r_fmt == 1.0
    assert bd.r_vkey == 1.0
    assert bd.r_tkey == 1.0
    assert bd.r_rep == 0.0
    assert bd.r_cons == 1.0
    assert bd.total == pytest.approx(5.0)
    assert score.visual_coverage == 1.0
    assert score.consistency == 1.0


def test_total_reward_unit_weights_is_plain_sum():
    bd, diag = total_reward(
        WELL_FORMED,
        "10",
        match_policy="numeric",
        visual_keys=["red circle"],
        question="circle with radius 5",
    )
    assert diag.well_formed
    assert bd.total == pytest.approx(math.fsum(bd.components()))


def test_total_reward_perception_heavy_weights():
    # same rollout, w_acc halved: linearity moves the total down by 0.5
    base, _ = total_reward(
        WELL_FORMED, "10", match_policy="numeric",
        visual_keys=["red circle", "radius 5"], textual_keys=["radius"],
        question="circle with radius 5 cm",
    )
    heavy, _ = total_reward(
        WELL_FORMED, "10", match_policy="numeric",
        visual_keys=["red circle", "radius 5"], textual_keys=["radius"],
        question="circle with radius 5 cm",
        weights=RewardWeights(acc=0.5),
    )
    assert base.total == pytest.approx(5.0)
    assert heavy.total == pytest.approx(4.5)


def test_correctness_only_weights_reduce_to_acc_plus_fmt():
    # w = (1,1,0,0,0,0) must reproduce a plain correctness-plus-format scorer
    w = RewardWeights(acc=1, fmt=1, vkey=0, tkey=0, rep=0, cons=0)
    cases = [
        (WELL_FORMED, "10", 2.0),          # right answer, well-formed
        (WELL_FORMED, "11", 1.0),          # wrong answer, well-formed
        ("<answer>10</answer>", "10", 1.0),  # right answer, malformed
        ("free text", "10", 0.0),
    ]
    for text, gold, expected in cases:
        bd, _ = total_reward(
            text, gold, match_policy="numeric",
            visual_keys=["ignored key"], textual_keys=["ignored too"],
            question="irrelevant", weights=w,
        )
        assert bd.total == pytest.approx(expected), (text, gold)


def test_malformed_rollout_keeps_accuracy_zeroes_perception():
    text = "<description>d</description><answer>10</answer>"  # think missing
    score = score_rollout(text, "10", match_policy="numeric",
                          visual_keys=["d"], question="q")
    bd = score.breakdown
    assert not score.diagnostics.well_formed
    assert score.response is None
    assert bd.r_fmt == 0.0
    assert bd.r_acc == 1.0       # answer span still extractable
    assert bd.r_vkey == 0.0 and bd.r_tkey == 0.0 and bd.r_cons == 0.0
    assert score.visual_coverage == 0.0


def test_malformed_rollout_without_answer_span():
    score = score_rollout("nothing structured at all", "10")
    assert score.breakdown.r_acc == 0.0
    assert score.breakdown.total <= 0.0  # only repetition can contribute


def test_keys_in_wrong_segment_do_not_count():
    # visual keys sitting in think contribute nothing to vkey
    text = (
        "<description>unrelated words</description>"
        "<think>red circle radius 5</think>"
        "<answer>10</answer>"
    )
    score = score_rollout(
        text, "10", match_policy="numeric",
        visual_keys=["red circle", "radius 5"],
    )
    assert score.breakdown.r_vkey == 0.0
    assert score.visual_coverage == 0.0


def test_consistency_uses_question_as_evidence():
    # claim is supported only by the question, not the description
    text = (
        "<description>a plain figure</description>"
        "<think>the radius is 5 exactly</think>"
        "<answer>10</answer>"
    )
    score = score_rollout(text, "10", match_policy="numeric",
                          question="the circle radius is 5")
    assert score.consistency == 1.0


def test_consistency_conflict_zeroes_in_rollout():
    text = (
        "<description>the radius is 7</description>"
        "<think>the radius is 5</think>"
        "<answer>10</answer>"
    )
    score = score_rollout(text, "10", match_policy="numeric")
    assert score.consistency == 0.0


def test_repetition_scope_configuration():
    noisy = "spam spam spam spam spam spam spam spam"
    text = (
        f"<description>{noisy}</description>"
        "<think>all distinct words here now</think>"
        "<answer>10</answer>"
    )
    scoped = score_rollout(
        text, "10", match_policy="numeric",
        config=RewardConfig(repetition_scope="think"),
    )
    assert scoped.breakdown.r_rep == 0.0
    default = score_rollout(text, "10", match_policy="numeric")
    assert default.breakdown.r_rep < 0.0


def test_reward_config_validation():
    with pytest.raises(ConfigError):
        RewardConfig(ngram_order=0)
    with pytest.raises(ConfigError):
        RewardConfig(repetition_scope="everything")


def test_breakdown_component_ranges_seeded():
    # spec'd codomains hold on randomized rollouts, well-formed or not
    rng = random.Random(2024)
    fragments = [
        "<description>", "</description>", "<think>", "</think>",
        "<answer>", "</answer>", "radius is 5", "10", "red circle",
        "spam spam spam", " ", "the height is 3",
    ]
    for _ in range(300):
        text = "".join(rng.choice(fragments) for _ in range(rng.randrange(1, 12)))
        score = score_rollout(text, "10", match_policy="numeric",
                              visual_keys=["red circle"], textual_keys=["radius 5"],
                              question="radius is 5")
        bd = score.breakdown
        assert bd.r_acc in (0.0, 1.0)
        assert bd.r_fmt in (0.0, 1.0)
        assert bd.r_vkey in (0.0, 0.5, 1.0)
        assert bd.r_tkey in (0.0, 0.5, 1.0)
        assert -1.0 <= bd.r_rep <= 0.0
        assert 0.0 <= bd.r_cons <= 1.0


def test_claimed_facts_include_answer_segment():
    # the answer is part of what the response commits to
    claimed = extract_claimed_facts("the radius is 5", "radius 7")
    texts = {f.text for f in claimed}
    assert any("5" in t for t in texts)
    assert any("7" in t for t in texts)
