"""Smoke test for the Python bindings. Run after `maturin develop` or an editable install."""

import math
import tempfile
from pathlib import Path

import sqa_forge as sf


def check_geometry():
    assert sf.classify_quadrant((1.0, 0.0), (0.0, 0.0), 0.0) == "front"
    assert sf.classify_quadrant((0.0, 1.0), (0.0, 0.0), 0.0) == "left"
    assert sf.classify_quadrant((0.0, -1.0), (0.0, 0.0), 0.0) == "right"
    assert sf.classify_quadrant((-1.0, 0.0), (0.0, 0.0), 0.0) == "back"
    b = sf.relative_bearing((0.0, 2.0), (0.0, 0.0), 0.0)
    assert abs(b - math.pi / 2) < 1e-12
    assert abs(sf.rotate_heading(0.0, 90) - math.pi / 2) < 1e-12
    try:
        sf.rotate_heading(0.0, 45)
    except ValueError:
        pass
    else:
        raise AssertionError("45 degrees accepted")


def check_augment_and_scoring():
    scenes, seeds = sf.cross_room()
    groups = [sf.augment_group(s, scenes[0]) for s in seeds]
    assert all(len(g["variants"]) == 3 for g in groups)

    records = [m["record"] for g in groups for m in [g["seed"], *g["variants"]]]
    preds = sf.run_mock("oracle", records, scenes, model_id="m")
    answers = {p["qid"]: p["predicted_answer"] for p in preds}
    acc = sf.score_accuracy(answers, records)
    assert acc["total"] == len(records)
    answered = {q for q, a in answers.items() if a}
    assert acc["correct"] == len(answered) > 0
    checkable = [r for r in records if r["qid"] in answered]
    assert sf.vrs(answers, checkable)["vrs"] == 100.0

    assert sf.answers_match("The Chair.", "chair")
    assert not sf.answers_match("", "")
    assert sf.normalize_answer("  The Chair. ") == "chair"
    assert sf.vrs_from_counts([4, 4, 0, 2])["vrs"] == 62.5

    lex = sf.Lexicon()
    assert lex.remap("the lamp is on my left", 90) == "the lamp is in front of me"


def check_filter_and_kappa():
    scenes, seeds = sf.synthetic_seeds(40, 7)
    by_id = {s["scene_id"]: s for s in scenes}
    groups = [sf.augment_group(s, by_id[s["scene_id"]]) for s in seeds]
    gold = [
        m["record"]
        for g in groups
        if all(m["validity"] != "invalid" for m in [g["seed"], *g["variants"]])
        for m in [g["seed"], *g["variants"]]
    ]
    full = sf.run_mock("oracle", gold, scenes, model_id="m")
    blind = sf.run_mock("blind_prior", gold, scenes, model_id="m", variant="blind")
    llm = sf.run_mock("blind_prior", gold, scenes, model_id="llm", variant="llm", seed=3)
    kept, report = sf.build_benchmark(gold, [(full, blind)], llm)
    assert report["original_count"] == len(gold)
    assert report["final_count"] == len(kept) <= len(gold)

    k = sf.cohens_kappa(["a", "b", "a", "b"], ["a", "b", "a", "b"])
    assert k["kappa"] == 1.0

    with tempfile.TemporaryDirectory() as d:
        log = Path(d) / "decisions.jsonl"
        store = sf.ReviewStore(groups, scenes, str(log))
        gid = groups[0]["group_id"]
        item = store.decide({"group_id": gid, "reviewer_id": "r1", "status": "accepted"})
        assert item["status"] == "accepted"
        assert len(log.read_text().splitlines()) == 1
        try:
            store.decide({"group_id": gid, "reviewer_id": "r1", "status": "rejected"})
        except ValueError:
            pass
        else:
            raise AssertionError("repeat decision accepted")


def check_reweight():
    batch = [
        {"tokens": [1, 2, 3], "lp_blind": [-0.1, -2.0, -1.0], "lp_text": [-0.5, -0.3, -1.2], "lp_full": [-0.2, -0.4, -0.9]},
        {"tokens": [4], "lp_blind": [-3.0], "lp_text": [-0.7], "lp_full": [-0.05]},
    ]
    unit = sf.rft_loss(batch, sf.ReweightConfig.unit_weights())
    assert unit["loss"] == sf.cross_entropy(batch)
    dec = sf.decomposition_check(batch)
    assert abs(dec["residual"]) < 1e-10
    w = sf.surprise_weight(-2.0, -0.5)
    assert 0.1 <= w <= 10.0
    assert sf.ReweightConfig().weight_cap == (0.1, 10.0)

    demo = sf.rft_demo(guessable_frac=0.3, seeds=2)
    assert len(demo["seeds"]) == 2
    for s in demo["seeds"]:
        assert s["rft_delta_dependent"] > s["sft_delta_dependent"]


if __name__ == "__main__":
    check_geometry()
    check_augment_and_scoring()
    check_filter_and_kappa()
    check_reweight()
    print("python smoke test: ok")
