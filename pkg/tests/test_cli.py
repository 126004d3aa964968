import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from bimnav import cli

from conftest import scene_doc, square


def write_scene(tmp_path, doc, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def load(path):
    return json.loads(path.read_text())


@pytest.fixture
def empty_scene(tmp_path):
    return write_scene(tmp_path, scene_doc(bounds=(0, 0, 3, 2), start=(0.5, 0.5), goal=(2.5, 1.5)))


@pytest.fixture
def walled_scene(tmp_path):
    return write_scene(tmp_path, scene_doc([square("w1", "Wall", 4, 0, 4.5, 10, "full-height partition")]))


# --- exit codes --------------------------------------------------------------


def test_plan_empty_scene_naive(tmp_path, empty_scene):
    out = tmp_path / "out"
    assert cli.main(["plan", empty_scene, "-a", "naive", "-o", str(out)]) == 0
    plan = load(out / "plan.json")
    assert plan["path"][0] == [5, 5] and plan["path"][-1] == [25, 15]
    assert load(out / "report.json")["report"]["algorithm"] == "naive"


def test_plan_walled_off_goal(tmp_path, walled_scene, capsys):
    assert cli.main(["plan", walled_scene, "-a", "mha", "-o", str(tmp_path / "o")]) == cli.EXIT_NO_PATH
    assert "NoPathError" in capsys.readouterr().err


def test_plan_endpoint_inside_obstacle(tmp_path):
    scene = write_scene(tmp_path, scene_doc([square("b", "Box", 0.5, 0.5, 2, 2)]))
    assert cli.main(["plan", scene, "-a", "naive", "-o", str(tmp_path / "o")]) == cli.EXIT_NO_PATH


def test_bad_scene(tmp_path, capsys):
    doc = scene_doc()
    doc["resolution"] = -1
    assert cli.main(["plan", write_scene(tmp_path, doc), "-a", "naive"]) == cli.EXIT_SCENE
    assert "resolution" in capsys.readouterr().err
    assert cli.main(["plan", str(tmp_path / "missing.json"), "-a", "naive"]) == cli.EXIT_SCENE


def test_usage_errors(tmp_path, empty_scene):
    assert cli.main(["compare", empty_scene, "-a", "naive"]) == cli.EXIT_USAGE
    assert cli.main(["compare", empty_scene, "-a", "naive,naive"]) == cli.EXIT_USAGE
    assert cli.main(["plan", empty_scene, "-a", "dstar"]) == cli.EXIT_USAGE
    assert cli.main(["plan", empty_scene, "--w1", "0.5", "-a", "naive"]) == cli.EXIT_USAGE
    # gpt-mha without a risk source
    assert cli.main(["plan", "scenario-1", "-o", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["plan", empty_scene, "--fixture", "site-survey", "--remote"]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE


class _Unauthorized(BaseHTTPRequestHandler):
    def do_POST(self):
        self.send_response(401)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(b'{"error": "invalid api key"}')

    def log_message(self, *args):
        pass


@pytest.fixture
def bad_key_server():
    server = HTTPServer(("127.0.0.1", 0), _Unauthorized)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def test_assess_remote_bad_key(tmp_path, bad_key_server, monkeypatch, capsys):
    monkeypatch.setenv("BIMNAV_API_KEY", "wrong")
    code = cli.main(["assess", "scenario-1", "--remote", "--endpoint", bad_key_server, "-o", str(tmp_path / "a.json")])
    assert code == cli.EXIT_PROVIDER
    assert "401" in capsys.readouterr().err


def test_unparseable_fixture(tmp_path):
    fixtures = tmp_path / "fx"
    fixtures.mkdir()
    from bimnav.gridmap import bundled_scene
    from bimnav.semantics import REMINDER, FamilyCatalog, build_prompt, prompt_key

    prompt = build_prompt(FamilyCatalog.from_scene(bundled_scene("scenario-1")))
    key = prompt_key(prompt)
    # one canned answer for the prompt and one for the re-prompt
    (fixtures / f"{key}.txt").write_text("I would rather not say.")
    (fixtures / f"{prompt_key(prompt + REMINDER)}.txt").write_text("Still no.")
    assert cli.main(["assess", "scenario-1", "--fixture-dir", str(fixtures), "-o", str(tmp_path / "a.json")]) == cli.EXIT_PARSE
    # a fixture directory without a matching file is a provider failure
    (fixtures / f"{key}.txt").unlink()
    assert cli.main(["assess", "scenario-1", "--fixture-dir", str(fixtures)]) == cli.EXIT_PROVIDER


# --- assess ------------------------------------------------------------------


def test_assess_prints_table(tmp_path, capsys):
    out = tmp_path / "a.json"
    assert cli.main(["assess", "scenario-1", "--fixture", "site-survey", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    for value in ("0.200", "0.500", "0.800", "0.900"):
        assert value in text
    assert "High-risk due to cutting" in text
    grinder = next(f for f in load(out)["families"] if f["family"] == "Grinder")
    assert grinder["raw"] == 0.9


def test_assess_no_obstacles(tmp_path, empty_scene, capsys):
    out = tmp_path / "a.json"
    assert cli.main(["assess", empty_scene, "--fixture", "site-survey", "-o", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    assert load(out)["families"] == []


def test_cached_assessment_matches_fixture(tmp_path):
    a = tmp_path / "a.json"
    assert cli.main(["assess", "scenario-1", "--fixture", "site-survey", "-o", str(a)]) == 0
    assert cli.main(["plan", "scenario-1", "--fixture", "site-survey", "-o", str(tmp_path / "f")]) == 0
    assert cli.main(["plan", "scenario-1", "--assessment", str(a), "-o", str(tmp_path / "c")]) == 0
    assert (tmp_path / "f" / "plan.json").read_bytes() == (tmp_path / "c" / "plan.json").read_bytes()
    assert load(tmp_path / "f" / "report.json") == load(tmp_path / "c" / "report.json")


# --- plan / compare ----------------------------------------------------------


def test_plan_gpt_beats_naive(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["plan", "scenario-1", "--fixture", "site-survey", "-o", str(out), "--render"]) == 0
    doc = load(out / "report.json")
    assert doc["report"]["algorithm"] == "gpt-mha"
    assert doc["report"]["ado"] > doc["baseline"]["ado"]
    assert (out / "plan.svg").read_bytes().startswith(b"<?xml")
    assert "*" in (out / "plan.txt").read_text()
    assert "naive:" in capsys.readouterr().out


def test_compare_scenario1(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["compare", "scenario-1", "--fixture", "site-survey", "-o", str(out), "--render"]) == 0
    rows = load(out / "compare.json")["rows"]
    assert [r["algorithm"] for r in rows] == ["naive", "mha", "mha-smoothed", "gpt-mha"]
    ado = {r["algorithm"]: r["ado"] for r in rows}
    assert ado["naive"] < ado["mha"] < ado["mha-smoothed"]
    assert ado["gpt-mha"] > ado["naive"]
    assert (out / "compare.csv").read_text().startswith("algorithm,")
    for name in ("compare.svg", "naive.txt", "gpt-mha.txt", "assessment.json"):
        assert (out / name).exists()
    assert "ADO_vs_base" in capsys.readouterr().out


def test_compare_empty_scene(tmp_path, empty_scene):
    out = tmp_path / "o"
    assert cli.main(["compare", empty_scene, "-a", "naive,mha", "-o", str(out)]) == 0
    rows = load(out / "compare.json")["rows"]
    assert rows[0]["path_length"] == rows[1]["path_length"]
    assert rows[1]["ado_improvement"] == 0
    # no obstacles anywhere: infinite clearance is written as null
    assert rows[0]["ado"] is None


def test_compare_all_fail(tmp_path, walled_scene):
    assert cli.main(["compare", walled_scene, "-a", "naive,mha", "-o", str(tmp_path / "o")]) == cli.EXIT_NO_PATH


def test_compare_partial_failure_still_succeeds(tmp_path):
    fixtures = tmp_path / "fx"
    fixtures.mkdir()
    code = cli.main(["compare", "scenario-1", "-a", "naive,gpt-mha", "--fixture-dir", str(fixtures),
                     "-o", str(tmp_path / "o")])
    assert code == 0
    rows = load(tmp_path / "o" / "compare.json")["rows"]
    assert rows[1]["error"].startswith("ProviderError")


def test_compare_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["compare", "scenario-2", "--fixture", "site-survey", "-o", str(tmp_path / name),
                         "--render"]) == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


# --- configuration precedence ------------------------------------------------


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"search": {"w1": 3.0, "apf_blend": 0.5}, "potential": {"k_rep": 50}}))
    args = cli.build_parser().parse_args(["plan", "scenario-1", "-c", str(cfg), "--w1", "1.5"])
    potential, search = cli.build_configs(args, cli._read_config(args.config))
    assert search.w1 == 1.5 and search.apf_blend == 0.5 and search.w2 == 2.0
    assert potential.k_rep == 50


def test_config_rejects_unknown_keys(tmp_path, empty_scene):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"search": {"w3": 1}}))
    assert cli.main(["plan", empty_scene, "-a", "naive", "-c", str(cfg)]) == cli.EXIT_USAGE
    cfg.write_text("{not json")
    assert cli.main(["plan", empty_scene, "-a", "naive", "-c", str(cfg)]) == cli.EXIT_USAGE


def test_provider_from_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"provider": {"kind": "fixture", "fixture": "site-survey"}, "algorithm": "gpt-mha"}))
    assert cli.main(["plan", "scenario-1", "-c", str(cfg), "-o", str(tmp_path / "o")]) == 0


def test_endpoint_precedence(tmp_path, monkeypatch):
    cfg = {"provider": {"kind": "remote", "endpoint": "https://cfg.test/chat", "model": "cfg-model"}}
    parse = cli.build_parser().parse_args
    provider, _ = cli.build_provider(parse(["assess", "x"]), cfg)
    assert (provider.endpoint, provider.model) == ("https://cfg.test/chat", "cfg-model")
    monkeypatch.setenv("BIMNAV_ENDPOINT", "https://env.test/chat")
    provider, _ = cli.build_provider(parse(["assess", "x"]), cfg)
    assert provider.endpoint == "https://env.test/chat" and provider.model == "cfg-model"
    provider, _ = cli.build_provider(parse(["assess", "x", "--endpoint", "https://flag.test/chat"]), cfg)
    assert provider.endpoint == "https://flag.test/chat"


def test_family_coefficient_flag(tmp_path):
    args = cli.build_parser().parse_args(["plan", "x", "--family-coefficient", "Grinder=0.3"])
    potential, _ = cli.build_configs(args, {})
    assert potential.family_coefficients == {"Grinder": 0.3}
    bad = cli.build_parser().parse_args(["plan", "x", "--family-coefficient", "Grinder"])
    with pytest.raises(cli.UsageError):
        cli.build_configs(bad, {})


# --- render ------------------------------------------------------------------


def test_render_ascii_to_stdout(capsys):
    assert cli.main(["render", "scenario-1", "-a", "naive"]) == 0
    text = capsys.readouterr().out
    assert text.count("S") == 1 and text.count("G") == 1 and "*" in text


def test_render_plan_file(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["plan", "scenario-1", "-a", "mha", "-o", str(out)]) == 0
    svg = tmp_path / "p.svg"
    assert cli.main(["render", "scenario-1", "--plan", str(out / "plan.json"), "--format", "svg",
                     "--field", "distance", "-o", str(svg)]) == 0
    assert svg.read_bytes().startswith(b"<?xml")


def test_render_weighted_field(tmp_path):
    png = tmp_path / "f.png"
    assert cli.main(["render", "scenario-2", "--fixture", "site-survey", "--format", "png", "-o", str(png)]) == 0
    assert png.read_bytes().startswith(b"\x89PNG")


def test_render_plan_outside_grid(tmp_path, empty_scene):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"path": [[0, 0], [99, 99]], "cost": 1.0, "expansions": {}}))
    assert cli.main(["render", empty_scene, "--plan", str(plan)]) == cli.EXIT_USAGE

