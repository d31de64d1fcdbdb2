import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afford.analysis import TaskDescription, analyze
from afford.errors import ProviderUnavailableError, ScoringParseError
from afford.geometry.pose import Pose
from afford.imagination import AgentOutcome, ObjectFrame, ResultantConfiguration
from afford.reasoner.core import HeuristicProvider, Provider
from afford.reasoner.schemas import FEATURES
from afford.scoring import (
    CandidateInteraction,
    Transform,
    compute_features,
    decide,
    evaluate,
    is_success,
    parse_scoring_program,
    validate_candidates,
)
from afford.stable_pose import StablePose

H = HeuristicProvider()
HALF = (0.04, 0.04, 0.05)
R = 0.01
CUP_ANALYSIS = analyze(TaskDescription("cup", (0.08, 0.08, 0.10)), H)
RETAINED = parse_scoring_program({"terms": [{"feature": "retained_fraction", "transform": "identity", "weight": 2.0}],
                                  "bias": -1.0})


def _config(positions, contacts, pose_id=0, plan_id=0, tilt=0.0) -> ResultantConfiguration:
    agents = tuple(AgentOutcome(k, Pose(position=p), tuple(c), tilt) for k, (p, c) in enumerate(zip(positions, contacts)))
    return ResultantConfiguration(pose_id, plan_id, agents, False, True,
                                  frame=ObjectFrame(Pose(), np.array(HALF)), agent_radius=R)


def _poses(n):
    return [StablePose(Pose(), np.array([0.0, 0.0, 1.0]), 1.0 / n, 1) for _ in range(n)]


INSIDE = [(0.0, 0.0, 0.02)] * 4
HELD = (1, 0, 0)
SPILLED = (0, 0, 1)


# parsing -----------------------------------------------------------------------


def test_parse_all_transform_forms():
    prog = parse_scoring_program({"terms": [
        {"feature": "inside_obb_fraction", "transform": "identity", "weight": 1},
        {"feature": "contact_ground_mean", "transform": "negate", "weight": 0.5},
        {"feature": "rel_height_mean", "transform": "band(0.02, 0.08)", "weight": 1},
        {"feature": "settled", "transform": {"kind": "threshold", "t": 0.5}, "weight": 1},
    ], "bias": -0.25})
    assert [t.transform.kind for t in prog.terms] == ["identity", "negate", "band", "threshold"]
    assert prog.terms[2].transform.params == (0.02, 0.08)
    assert parse_scoring_program(prog.to_dict()) == prog


def test_unknown_feature_rejected():
    with pytest.raises(ScoringParseError) as exc:
        parse_scoring_program({"terms": [{"feature": "magic_score", "transform": "identity", "weight": 1}]})
    assert exc.value.location == "terms[0].feature"


@pytest.mark.parametrize("transform", ["band(0.08, 0.02)", "threshold", "band(0.1)", "sqrt", "threshold(nan)"])
def test_bad_transforms_rejected(transform):
    with pytest.raises(ScoringParseError):
        parse_scoring_program({"terms": [{"feature": "settled", "transform": transform, "weight": 1}]})


def test_empty_program_rejected():
    with pytest.raises(ScoringParseError):
        parse_scoring_program({"terms": []})


def test_band_is_inclusive():
    band = Transform("band", (0.02, 0.08))
    assert [band(x) for x in (0.0199, 0.02, 0.05, 0.08, 0.0801)] == [0, 1, 1, 1, 0]


# features and scores -----------------------------------------------------------


def test_three_of_four_retained_scores_half():
    r = _config(INSIDE, [HELD, HELD, HELD, SPILLED])
    feats = compute_features(r)
    assert feats["retained_fraction"] == 0.75
    assert feats["contact_ground_mean"] == 0.25
    assert set(feats) == set(FEATURES)
    assert evaluate(RETAINED, r) == pytest.approx(0.5)


def test_zero_score_is_not_a_success():
    r = _config(INSIDE[:2], [HELD, SPILLED])
    assert evaluate(RETAINED, r) == 0.0
    assert not is_success(0.0)
    v = decide({0: [r]}, RETAINED, CUP_ANALYSIS, _poses(1), H)
    assert not v.functional
    assert v.per_pose_report[0]["candidate"] is False
    with pytest.raises(ValueError):
        CandidateInteraction(0, 0, "", None, r, 0.0)


def test_inside_fraction_uses_the_box():
    r = _config([(0, 0, 0.02), (0.05, 0, 0.02), (0, 0, 0.11), (0, 0, -0.01)], [HELD] * 4)
    assert compute_features(r)["inside_obb_fraction"] == 0.25


@given(st.floats(-5, 5), st.floats(0, 1), st.floats(0, 1))
def test_score_is_monotone_in_a_positively_weighted_feature(w, a, b):
    prog = parse_scoring_program({"terms": [{"feature": "retained_fraction", "transform": "identity", "weight": abs(w)}]})
    lo, hi = sorted((a, b))
    feats = dict.fromkeys(FEATURES, 0.0)
    assert evaluate(prog, dict(feats, retained_fraction=lo)) <= evaluate(prog, dict(feats, retained_fraction=hi))


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_step_transforms_are_indicators(t, x):
    assert Transform("threshold", (t,))(x) in (0.0, 1.0)
    assert Transform("band", (min(t, x), max(t, x)))(x) == 1.0


# validation --------------------------------------------------------------------


def _candidate(positions, contacts, score=1.0):
    return CandidateInteraction(0, 0, "", None, _config(positions, contacts), score)


def test_balls_inside_the_cavity_are_valid():
    ((_, outcome),) = validate_candidates([_candidate(INSIDE, [HELD] * 4)], CUP_ANALYSIS, H)
    assert outcome.valid


def test_balls_on_a_ledge_are_not_contained():
    # held by the object, but resting on the rim rather than inside
    ledge = [(0.035, 0.0, 0.10 + R)] * 2
    ((_, outcome),) = validate_candidates([_candidate(ledge, [HELD] * 2)], CUP_ANALYSIS, H)
    assert not outcome.valid
    assert outcome.reason == "agents not contained"


def test_no_candidates_no_judgements():
    assert validate_candidates([], CUP_ANALYSIS, H) == []


class _Down(Provider):
    def _complete(self, req):
        raise ProviderUnavailableError("endpoint down")


def test_unavailable_validator_rejects_unless_fail_open():
    c = _candidate(INSIDE, [HELD] * 4)
    ((_, closed),) = validate_candidates([c], CUP_ANALYSIS, _Down())
    ((_, opened),) = validate_candidates([c], CUP_ANALYSIS, _Down(), fail_open=True)
    assert not closed.valid and opened.valid
    assert closed.reason.startswith("validation unavailable")


# decision ----------------------------------------------------------------------


def test_ties_go_to_the_lower_pose():
    good = [HELD] * 4
    results = {1: [_config(INSIDE, good, pose_id=1)], 0: [_config(INSIDE, good, pose_id=0)]}
    v = decide(results, RETAINED, CUP_ANALYSIS, _poses(2), H)
    assert v.functional and v.optimal_pose_id == 0
    assert [(row["pose_id"], row["validated"]) for row in v.per_pose_report] == [(0, True), (1, True)]


def test_best_validated_candidate_wins():
    ledge = [(0.035, 0.0, 0.10 + R)] * 4
    results = {0: [_config(ledge, [HELD] * 4)],
               1: [_config(INSIDE, [HELD, HELD, HELD, SPILLED], pose_id=1)]}
    v = decide(results, RETAINED, CUP_ANALYSIS, _poses(2), H)
    # pose 0 scores higher but fails validation
    assert v.functional and v.optimal_pose_id == 1
    assert v.best_interaction.score == pytest.approx(0.5)
    ablated = decide(results, RETAINED, CUP_ANALYSIS, _poses(2), validate=False)
    assert ablated.optimal_pose_id == 0 and not ablated.validation_enabled


def test_verdict_round_trip_fields():
    v = decide({0: [_config(INSIDE, [HELD] * 4)]}, RETAINED, CUP_ANALYSIS, _poses(1), H)
    d = v.to_dict()
    assert d["functional"] and d["optimal_pose_id"] == 0
    assert d["best_interaction"]["score"] == pytest.approx(1.0)
    assert d["effective_affordance"] == "cup"
