import json

import pytest

from afford.cli import EXIT_FUNCTIONAL, EXIT_INPUT, EXIT_NOT_FUNCTIONAL, EXIT_PROVIDER, main
from afford.errors import InvalidInputError
from afford.harness.batch import load_dataset, run_batch, suite_items, write_dataset
from afford.harness.config import dump_config, parse_config
from afford.harness.procedural import ProceduralSpec, generate_object
from afford.physics.config import WorldConfig
from afford.reasoner.core import ProviderConfig

SUBSET = ("cup_small", "bowl", "cup_no_bottom")  # suite order


# config files ------------------------------------------------------------------


def test_config_keys_with_and_without_prefix():
    world, provider = parse_config("timestep = 0.005\nworld.friction = 0.7  # rubber\nprovider.temperature = 0\n"
                                   "max_retries = 3\n")
    assert world.timestep == 0.005 and world.friction == 0.7
    assert provider.temperature == 0.0 and provider.max_retries == 3


def test_unknown_config_key():
    with pytest.raises(InvalidInputError):
        parse_config("gravity_on_mars = 3.7\n")


def test_bad_config_value():
    with pytest.raises(InvalidInputError):
        parse_config("timestep = -1\n")


def test_config_round_trip():
    world, provider = WorldConfig(friction=0.3), ProviderConfig(temperature=0.2)
    assert parse_config(dump_config(world, provider)) == (world, provider)


# single-object commands --------------------------------------------------------


def _cup_file(tmp_path, defect="none"):
    mesh, _ = generate_object(ProceduralSpec("cup", {}, defect), seed=11)
    path = tmp_path / f"cup_{defect}.off"
    path.write_text(mesh.to_off())
    return path


def test_classify_exit_codes(tmp_path, capsys):
    assert main(["classify", str(_cup_file(tmp_path)), "cup"]) == EXIT_FUNCTIONAL
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["functional"] and verdict["best_interaction"]["score"] > 0
    assert main(["classify", str(_cup_file(tmp_path, "no_bottom")), "cup"]) == EXIT_NOT_FUNCTIONAL


def test_missing_mesh_is_an_input_error(tmp_path):
    assert main(["classify", str(tmp_path / "nowhere.off"), "cup"]) == EXIT_INPUT


def test_replay_miss_is_a_provider_error(tmp_path):
    empty = tmp_path / "fixtures"
    empty.mkdir()
    code = main(["analyze", str(_cup_file(tmp_path)), "cup", "--provider", "replay", "--fixtures-dir", str(empty)])
    assert code == EXIT_PROVIDER


def test_global_flags_work_either_side_of_the_subcommand(tmp_path, capsys):
    cup = str(_cup_file(tmp_path))
    main(["--n-orientations", "16", "stable-poses", cup])
    a = capsys.readouterr().out
    main(["stable-poses", cup, "--n-orientations", "16"])
    assert capsys.readouterr().out == a
    assert abs(sum(p["probability"] for p in json.loads(a)) - 1.0) < 1e-9


def test_analyze_profile_then_imagine(tmp_path, capsys):
    cup = str(_cup_file(tmp_path))
    assert main(["analyze", cup, "cup", "--profile", "--out", str(tmp_path / "a"), "--n-orientations", "16"]) == 0
    assert json.loads((tmp_path / "a" / "analysis.json").read_text())["effective_affordance"] == "cup"
    capsys.readouterr()
    bundle = tmp_path / "a" / "profile"
    assert main(["imagine", cup, str(bundle), "--out", str(tmp_path / "b"), "--snapshots"]) == 0
    lines = (tmp_path / "b" / "results.jsonl").read_text().splitlines()
    assert lines and all(json.loads(line)["agents"] for line in lines)
    assert list((tmp_path / "b" / "snapshots").glob("*.obj"))


# datasets and batches ----------------------------------------------------------


@pytest.fixture(scope="module")
def subset_dir(tmp_path_factory):
    items = [it for it in suite_items() if it.name in SUBSET]
    return write_dataset(items, tmp_path_factory.mktemp("subset"))


def test_dataset_round_trip(subset_dir):
    items = load_dataset(subset_dir)
    assert [it.name for it in items] == list(SUBSET)
    assert [it.label for it in items] == [True, True, False]
    assert items[0].functional_ups == ((0.0, 0.0, 1.0),)


def test_dataset_without_manifest_needs_an_affordance(tmp_path, subset_dir):
    (tmp_path / "bowl.off").write_text((subset_dir / "bowl.off").read_text())
    with pytest.raises(InvalidInputError):
        load_dataset(tmp_path)
    (item,) = load_dataset(tmp_path, "bowl")
    assert item.label is None and item.affordance == "bowl"


def test_gen_dataset_writes_the_suite(tmp_path):
    assert main(["gen-dataset", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.off"))) == 24
    assert len(load_dataset(tmp_path)) == 24


def test_batch_reruns_are_byte_identical(tmp_path, subset_dir, capsys):
    outs = [tmp_path / "one", tmp_path / "two"]
    for out in outs:
        assert main(["batch", "--dataset", str(subset_dir), "--out", str(out), "--n-orientations", "32"]) == 0
    for name in ("results.jsonl", "summary.json", "report.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    for fig in ("accuracy_by_class.png", "confusion.png", "scores.png"):
        assert (outs[0] / "figures" / fig).stat().st_size > 0
    summary = json.loads((outs[0] / "summary.json").read_text())
    c = summary["confusion"]
    assert c["tp"] + c["fp"] + c["tn"] + c["fn"] + c["unlabelled"] == summary["n_objects"] == 3
    rows = [json.loads(line) for line in (outs[0] / "results.jsonl").read_text().splitlines()]
    assert summary["n_correct"] == sum(r["correct"] for r in rows)
    assert (outs[0] / "report.csv").read_text().count("\n") == 4
    assert "accuracy" in capsys.readouterr().out


def test_worker_count_does_not_change_rows(subset_dir):
    items = load_dataset(subset_dir)[:2]
    one = run_batch(items, n_orientations=16, workers=1)
    two = run_batch(items, n_orientations=16, workers=2)
    assert one.rows == two.rows


def test_empty_batch_rejected():
    with pytest.raises(InvalidInputError):
        run_batch([])
