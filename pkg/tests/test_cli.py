import json
import subprocess
import sys

import pytest

from baid import cli, gas

USER = "org:laptopretail:cn:sales-division"
NAME = "baid:agent:laptopretail:salesadvisor"


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


@pytest.fixture
def home(tmp_path, monkeypatch):
    monkeypatch.setenv("BAID_HOME", str(tmp_path / "home"))
    return tmp_path


def _lifecycle(capsys, home):
    results = {}
    results["register"] = _run(capsys, "register-user", "--user-id", USER)
    code, added, _ = _run(capsys, "add-agent", "--user-id", USER, "--name", NAME,
                          "--capability", "sell-laptops", "--facts-url", "https://x.example/facts.json")
    results["add"] = (code, added, "")
    aid = added["agent_id"]
    results["proof"] = _run(capsys, "storage-proof", "--agent-id", aid)
    results["discover"] = _run(capsys, "discover", "--query", "sell-laptops")
    results["vc"] = _run(capsys, "issue-vc", "--agent-id", aid, "--task-id", "t1", "--scope", "purchase=1000",
                         "--valid-from", "0", "--valid-until", "100")
    bundle = home / "bundle.json"
    results["prove"] = _run(capsys, "prove-session", "--agent-id", aid, "--turns", "2", "--out", str(bundle))
    results["verify"] = _run(capsys, "verify-attestation", "--bundle", str(bundle), "--on-chain")
    results["update"] = _run(capsys, "update-agent", "--agent-id", aid, "--capability", "quote-prices")
    results["remove"] = _run(capsys, "remove-agent", "--agent-id", aid)
    results["gas"] = _run(capsys, "gas-report")
    return aid, bundle, results


def test_full_lifecycle(capsys, home):
    aid, bundle, r = _lifecycle(capsys, home)
    for name, (code, _, err) in r.items():
        assert code == 0, (name, err)
    assert aid.startswith("agentid:")
    assert r["proof"][1]["value"] == aid.removeprefix("agentid:")
    assert [h["agent_id"] for h in r["discover"][1]["hits"]] == [aid]
    assert r["verify"][1]["ok"] is True
    ops = [x["op_name"] for x in r["gas"][1]["receipts"]]
    assert ops == ["register_user", "add_agent", "remove_agent", "update_agent"]


def test_commands_deterministic(capsys, tmp_path, monkeypatch):
    outputs = []
    for run in ("a", "b"):
        monkeypatch.setenv("BAID_HOME", str(tmp_path / run / "home"))
        _, _, r = _lifecycle(capsys, tmp_path / run)
        outputs.append(json.dumps({k: v[1] for k, v in r.items()}, sort_keys=True))
    assert outputs[0] == outputs[1]


def test_verify_tampered_bundle(capsys, home):
    _run(capsys, "register-user", "--user-id", USER)
    _, added, _ = _run(capsys, "add-agent", "--user-id", USER, "--name", NAME)
    bundle = home / "bundle.json"
    _run(capsys, "prove-session", "--agent-id", added["agent_id"], "--out", str(bundle))
    assert _run(capsys, "verify-attestation", "--bundle", str(bundle))[0] == 0
    doc = json.loads(bundle.read_text())
    env = bytearray.fromhex(doc["envelope"])
    env[-1] ^= 1
    doc["envelope"] = env.hex()
    bundle.write_text(json.dumps(doc))
    code, result, _ = _run(capsys, "verify-attestation", "--bundle", str(bundle))
    assert code == 1 and result["ok"] is False
    doc["envelope"] = "zz"
    bundle.write_text(json.dumps(doc))
    assert _run(capsys, "verify-attestation", "--bundle", str(bundle))[0] == 1


def test_verify_wrong_trusted_root(capsys, home):
    _run(capsys, "register-user", "--user-id", USER)
    _, added, _ = _run(capsys, "add-agent", "--user-id", USER, "--name", NAME)
    bundle = home / "bundle.json"
    _run(capsys, "prove-session", "--agent-id", added["agent_id"], "--out", str(bundle))
    code, result, _ = _run(capsys, "verify-attestation", "--bundle", str(bundle), "--trusted-root", "00" * 32)
    assert code == 1 and "root CA" in result["reason"]


def test_gas_report_reference(capsys, home):
    code, result, _ = _run(capsys, "gas-report", "--reference")
    assert code == 0
    assert [r["op_name"] for r in result["receipts"]] == list(cli.GAS_ORDER)
    assert result["reference_gas"] == {op: gas.REFERENCE_GAS[op] for op in cli.GAS_ORDER}
    assert 1.25 <= result["ratios"]["add_agent/register_user"] <= 1.35


def test_run_scenario_and_suite(capsys, home):
    code, report, _ = _run(capsys, "run-scenario", "--seed", "7")
    assert code == 0 and report["completed"]
    code, report, _ = _run(capsys, "run-scenario", "--attack", "reorder")
    assert code == 1 and report["abort"]["reason"] == "ChainInvalid"
    code, suite, _ = _run(capsys, "run-scenario", "--suite")
    assert code == 0 and suite["ok"] and len(suite["attacks"]) == 5


def test_run_scenario_config_file(capsys, home):
    path = home / "scenario.json"
    path.write_text(json.dumps({"seed": 3, "price": 1100}))
    code, report, _ = _run(capsys, "run-scenario", "--config", str(path))
    assert code == 1 and report["abort"]["phase"] == "payment"


def test_input_errors(capsys, home):
    assert _run(capsys, "remove-agent", "--agent-id", "agentid:00")[0] == 2
    assert _run(capsys, "verify-attestation", "--bundle", str(home / "missing.json"))[0] == 2
    _run(capsys, "register-user", "--user-id", USER)
    code, _, err = _run(capsys, "register-user", "--user-id", USER)
    assert code == 2 and "already registered" in err
    assert _run(capsys, "register-user", "--user-id", "u2", "--tau-num", "5")[0] == 2
    _, added, _ = _run(capsys, "add-agent", "--user-id", USER, "--name", NAME)
    code, _, err = _run(capsys, "issue-vc", "--agent-id", added["agent_id"], "--task-id", "t", "--scope", "bad",
                        "--valid-from", "0", "--valid-until", "1")
    assert code == 2 and "action=limit" in err


def test_console_entry_point(home):
    proc = subprocess.run([sys.executable, "-m", "baid.cli", "gas-report", "--reference"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["source"] == "reference-lifecycle"
