"""``baid`` command line.

Every key is derived from ``--seed`` and the names involved, so each
command is reproducible. JSON goes to stdout (and to ``--out`` when
given), diagnostics to stderr. Exit codes: 0 ok, 1 verification false,
2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import crypto, engine, gas, ledger
from .credentials import issue_credential
from .errors import BaidError
from .fixtures import noisy_capture, reference_lifecycle, seeded_embedding
from .identity import AgentFacts, ProfileConfig, bind_owner, canonical_json, make_agent_id
from .ledger import AgentAttribute, LedgerState
from .phases import (
    BiometricStatement,
    ConfigStatement,
    FinalAttestation,
    SessionState,
    build_turn,
    finalize_session,
    make_turn_program,
    prove_phase1,
    prove_phase2,
    prove_turn,
    verify_attestation,
)
from .runtime import Attack, ScenarioConfig, check_on_chain, run_adversary_suite, run_scenario
from .tls import make_server

MAX_STEPS = 10_000
EXIT_OK, EXIT_FALSE, EXIT_INPUT = 0, 1, 2
# reference ordering of the lifecycle operations in gas reports
GAS_ORDER = ("register_user", "add_agent", "remove_agent", "update_agent")


class CliInputError(Exception):
    pass


@dataclass
class CliConfig:
    ledger_path: Path
    vk_path: Path
    tau: tuple[int, int]
    seed: int
    out: Path | None = None

    @classmethod
    def from_args(cls, args) -> "CliConfig":
        home = Path(os.environ.get("BAID_HOME", ".baid"))
        return cls(
            Path(args.ledger) if args.ledger else home / "ledger.json",
            Path(args.vk) if args.vk else home / "vk.json",
            (args.tau_num, args.tau_den),
            args.seed,
            Path(args.out) if args.out else None,
        )

    # deterministic key material
    def key(self, *label: str) -> crypto.KeyPair:
        return crypto.keygen(":".join(("cli", str(self.seed), *label)))

    def engine(self):
        return engine.setup(MAX_STEPS, f"cli:{self.seed}:engine")

    def profile(self, user_id: str) -> ProfileConfig:
        cfg = ProfileConfig(policy_rules=(f"act only for {user_id}",), operational_params={"region": "cn"})
        return bind_owner(cfg, user_id, seeded_embedding(f"cli:{self.seed}:{user_id}"))


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliInputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise CliInputError(f"{path}: invalid JSON ({exc})") from None


def _load_ledger(cfg: CliConfig, create: bool = False) -> LedgerState:
    if not cfg.ledger_path.exists():
        if create:
            return ledger.genesis(cfg.key("kyc-issuer").public)
        raise CliInputError(f"{cfg.ledger_path}: no ledger snapshot (run register-user first)")
    return LedgerState.from_json(_read_json(cfg.ledger_path))


def _save_ledger(cfg: CliConfig, st: LedgerState) -> None:
    cfg.ledger_path.parent.mkdir(parents=True, exist_ok=True)
    cfg.ledger_path.write_text(st.dumps())


def _agent(st: LedgerState, agent_id: str):
    a = st.find_agent(agent_id)
    if a is None:
        raise CliInputError(f"agent {agent_id} is not registered")
    return a


def _program_label(name: str) -> str:
    return name.removeprefix("baid:agent:").replace(":", ".")


def _scope(items) -> list[tuple[str, int]]:
    out = []
    for item in items or ():
        action, sep, limit = item.partition("=")
        if not sep:
            raise CliInputError(f"scope entry {item!r} is not action=limit")
        try:
            out.append((action, int(limit)))
        except ValueError:
            raise CliInputError(f"scope limit {limit!r} is not an integer") from None
    return out


# -- commands ---------------------------------------------------------------


def cmd_register_user(cfg: CliConfig, args):
    st = _load_ledger(cfg, create=True)
    issuer = cfg.key("kyc-issuer")
    kyc = ledger.issue_kyc(issuer.secret, crypto.hash_parts(b"kyc-subject", args.user_id))
    st, addr, receipt = ledger.register_user(st, kyc, cfg.key("owner", args.user_id).public, args.user_id)
    _save_ledger(cfg, st)
    return EXIT_OK, {"user_address": addr.hex(), "receipt": receipt.to_json(), "state_root": st.state_root.hex()}


def cmd_add_agent(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    program = make_turn_program(args.program_label or _program_label(args.name))
    profile = cfg.profile(args.user_id)
    ident = make_agent_id(args.name, program.commitment, profile, args.user_id, {"agent_version": args.agent_version})
    attr = AgentAttribute.from_identifier(ident, tuple(args.capability or ()), tuple(args.role or ()))
    url = args.facts_url or f"https://agents.example/{_program_label(args.name)}/agentfacts.json"
    owner = cfg.key("owner", args.user_id)
    uaddr = ledger.user_address(args.user_id)
    sig = crypto.sign(owner.secret, ledger.add_agent_message(st, uaddr, ident, attr, url))
    st, aaddr, receipt = ledger.add_agent(st, sig, uaddr, ident, attr, url)
    _save_ledger(cfg, st)
    facts = AgentFacts(ident.text, attr.capabilities, (("https", url.rsplit("/", 1)[0] + "/a2a"),), "kyc-verified")
    return EXIT_OK, {
        "agent_id": ident.text,
        "agent_address": aaddr.hex(),
        "program_commitment": program.commitment.hex(),
        "facts_url": url,
        "agent_facts": facts.signed(owner.secret).to_json(),
        "receipt": receipt.to_json(),
    }


def cmd_update_agent(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    a = _agent(st, args.agent_id)
    old = a.attribute
    attr = AgentAttribute(
        old.name,
        old.program_commitment,
        old.profile_hash,
        old.user_id,
        old.agent_id,
        tuple(args.capability) if args.capability else old.capabilities,
        tuple(args.role) if args.role else old.roles,
    )
    url = args.facts_url or a.agent_facts_url
    owner = cfg.key("owner", old.user_id)
    sig = crypto.sign(owner.secret, ledger.update_agent_message(st, a.address, attr, url))
    st, receipt = ledger.update_agent(st, sig, a.address, attr, url)
    _save_ledger(cfg, st)
    return EXIT_OK, {"agent_id": old.agent_id, "version": st.get_agent(a.address).version, "receipt": receipt.to_json()}


def cmd_remove_agent(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    a = _agent(st, args.agent_id)
    owner = cfg.key("owner", a.attribute.user_id)
    sig = crypto.sign(owner.secret, ledger.remove_agent_message(st, a.address))
    st, receipt = ledger.remove_agent(st, sig, a.address)
    _save_ledger(cfg, st)
    return EXIT_OK, {"agent_id": args.agent_id, "status": st.get_agent(a.address).operational_status.value, "receipt": receipt.to_json()}


def cmd_storage_proof(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    a = _agent(st, args.agent_id)
    slot = ledger.field_slot(args.field) if args.field else ledger.agentid_slot(args.agent_id)
    proof = ledger.get_storage_proof(st, a.address, slot)
    ok = proof.verify()
    return (EXIT_OK if ok else EXIT_FALSE), dict(proof.to_json(), verified=ok)


def cmd_discover(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    facts = _read_json(Path(args.facts)) if args.facts else {}
    hits = ledger.discover_agent(st, args.query, facts)
    return EXIT_OK, {
        "query": args.query,
        "hits": [
            {
                "agent_id": h.contract.attribute.agent_id,
                "address": h.contract.address.hex(),
                "name": h.contract.attribute.name,
                "capabilities": list(h.contract.attribute.capabilities),
                "facts_url": h.contract.agent_facts_url,
                "trusted": h.trusted,
            }
            for h in hits
        ],
    }


def _phase1(cfg: CliConfig, pp, profile: ProfileConfig):
    capture = noisy_capture(profile.biometric_template, random.Random(f"cli:{cfg.seed}:capture"), 0.2)
    return prove_phase1(pp, BiometricStatement.build(profile, capture, cfg.tau))


def cmd_issue_vc(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    a = _agent(st, args.agent_id)
    user_id = a.attribute.user_id
    pp, vk = cfg.engine()
    profile = cfg.profile(user_id)
    vc = issue_credential(
        profile,
        cfg.key("owner", user_id).secret,
        vk,
        _phase1(cfg, pp, profile),
        agent_id=args.agent_id,
        user_id=user_id,
        task_id=args.task_id,
        task_definition=args.task,
        security_level=args.security_level,
        scope=_scope(args.scope),
        valid_from=args.valid_from,
        valid_until=args.valid_until,
    )
    return EXIT_OK, vc.to_json()


def cmd_prove_session(cfg: CliConfig, args):
    st = _load_ledger(cfg)
    a = _agent(st, args.agent_id)
    attr = a.attribute
    program = make_turn_program(args.program_label or _program_label(attr.name))
    if program.commitment != attr.program_commitment:
        raise CliInputError("program label does not match the registered program commitment")
    pp, vk = cfg.engine()
    profile = cfg.profile(attr.user_id)
    ident = make_agent_id(attr.name, program.commitment, profile, attr.user_id, {"agent_version": args.agent_version})
    if ident.text != attr.agent_id:
        raise CliInputError("recomputed AgentID differs from the registered one (check --agent-version)")
    env1 = _phase1(cfg, pp, profile)
    proof = ledger.get_storage_proof(st, a.address, ledger.agentid_slot(attr.agent_id))
    envs = [env1, prove_phase2(pp, ConfigStatement.from_ledger(proof, profile, ident), env1)]
    ca = cfg.key("root-ca")
    server = make_server(ca.secret, "llm.cli.example", cfg.seed)
    state = SessionState()
    for t in range(1, args.turns + 1):
        query = canonical_json({"turn": t, "query": f"request {t}"})
        response, transcript = server.respond(query, f"cli:{cfg.seed}:turn:{t}", canonical_json({"action": "reply", "args": {"text": f"answer {t}"}}))
        stmt, state = build_turn(state, query, response, transcript, server.name, ca.public)
        envs.append(prove_turn(pp, t, stmt, envs[-1], program))
    bundle = finalize_session(vk, envs)
    cfg.vk_path.parent.mkdir(parents=True, exist_ok=True)
    cfg.vk_path.write_text(json.dumps(vk.to_json(), sort_keys=True))
    return EXIT_OK, bundle.to_json()


def cmd_verify_attestation(cfg: CliConfig, args):
    vk = engine.VerifyingKey.from_json(_read_json(cfg.vk_path))
    try:
        bundle = FinalAttestation.from_json(_read_json(Path(args.bundle)))
    except (BaidError, KeyError, ValueError, TypeError) as exc:
        # parseable JSON that is not an envelope counts as a failed proof
        return EXIT_FALSE, {"ok": False, "reason": f"unreadable attestation: {exc}"}
    roots = [crypto.from_hex(r) for r in args.trusted_root] if args.trusted_root else [cfg.key("root-ca").public]
    if args.on_chain:
        v, _, _ = check_on_chain(vk, bundle, _load_ledger(cfg), tau_min=cfg.tau, trusted_roots=roots)
        return (EXIT_OK if v.ok else EXIT_FALSE), v.to_json()
    check = verify_attestation(vk, bundle, cfg.tau, roots)
    out = {"ok": check.ok, "reason": check.reason, "chain": check.report.to_json() if check.report else None}
    return (EXIT_OK if check.ok else EXIT_FALSE), out


def cmd_run_scenario(cfg: CliConfig, args):
    sc = ScenarioConfig.from_json(_read_json(Path(args.config))) if args.config else ScenarioConfig(seed=cfg.seed)
    if args.attack:
        sc = replace(sc, attack=args.attack)
    if args.suite:
        reports = run_adversary_suite(sc)
        ok = all(r.ok for r in reports)
        return (EXIT_OK if ok else EXIT_FALSE), {"ok": ok, "attacks": [r.to_json() for r in reports]}
    report = run_scenario(sc)
    return (EXIT_OK if report.completed else EXIT_FALSE), report.to_json()


def cmd_gas_report(cfg: CliConfig, args):
    if args.reference or not cfg.ledger_path.exists():
        receipts = list(reference_lifecycle().receipts.values())
        source = "reference-lifecycle"
    else:
        receipts = list(_load_ledger(cfg).gas_log)
        source = "ledger"
    rank = {op: i for i, op in enumerate(GAS_ORDER)}
    ordered = sorted(receipts, key=lambda r: (rank.get(r.op_name, len(rank)), r.block_number))
    first = {}
    for r in ordered:
        first.setdefault(r.op_name, r.gas_used)
    ratios = {}
    if "register_user" in first:
        reg = first["register_user"]
        ratios = {f"{op}/register_user": first[op] / reg for op in GAS_ORDER[1:] if op in first}
    return EXIT_OK, {
        "source": source,
        "receipts": [r.to_json() for r in ordered],
        "reference_gas": {op: gas.REFERENCE_GAS[op] for op in GAS_ORDER},
        "ratios": ratios,
    }


COMMANDS = {
    "register-user": cmd_register_user,
    "add-agent": cmd_add_agent,
    "update-agent": cmd_update_agent,
    "remove-agent": cmd_remove_agent,
    "storage-proof": cmd_storage_proof,
    "discover": cmd_discover,
    "issue-vc": cmd_issue_vc,
    "prove-session": cmd_prove_session,
    "verify-attestation": cmd_verify_attestation,
    "run-scenario": cmd_run_scenario,
    "gas-report": cmd_gas_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--ledger", help="ledger snapshot (default $BAID_HOME/ledger.json)")
    common.add_argument("--vk", help="verifying key file (default $BAID_HOME/vk.json)")
    common.add_argument("--tau-num", type=int, default=3)
    common.add_argument("--tau-den", type=int, default=4)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="also write the JSON result here")

    p = argparse.ArgumentParser(prog="baid", description="Agent identity registry, session proofs and credentials.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("register-user", parents=[common])
    s.add_argument("--user-id", required=True)

    s = sub.add_parser("add-agent", parents=[common])
    s.add_argument("--user-id", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--program-label")
    s.add_argument("--agent-version", default="1.0.0")
    s.add_argument("--capability", action="append")
    s.add_argument("--role", action="append")
    s.add_argument("--facts-url")

    s = sub.add_parser("update-agent", parents=[common])
    s.add_argument("--agent-id", required=True)
    s.add_argument("--capability", action="append")
    s.add_argument("--role", action="append")
    s.add_argument("--facts-url")

    s = sub.add_parser("remove-agent", parents=[common])
    s.add_argument("--agent-id", required=True)

    s = sub.add_parser("storage-proof", parents=[common])
    s.add_argument("--agent-id", required=True)
    s.add_argument("--field", help="contract field name; default is the AgentID slot")

    s = sub.add_parser("discover", parents=[common])
    s.add_argument("--query", required=True)
    s.add_argument("--facts", help="JSON map of facts URL to AgentFacts document")

    s = sub.add_parser("issue-vc", parents=[common])
    s.add_argument("--agent-id", required=True)
    s.add_argument("--task-id", required=True)
    s.add_argument("--task", default="")
    s.add_argument("--scope", action="append", help="action=limit, repeatable")
    s.add_argument("--security-level", type=int, default=1)
    s.add_argument("--valid-from", type=int, required=True)
    s.add_argument("--valid-until", type=int, required=True)

    s = sub.add_parser("prove-session", parents=[common])
    s.add_argument("--agent-id", required=True)
    s.add_argument("--program-label")
    s.add_argument("--agent-version", default="1.0.0")
    s.add_argument("--turns", type=int, default=1)

    s = sub.add_parser("verify-attestation", parents=[common])
    s.add_argument("--bundle", required=True)
    s.add_argument("--trusted-root", action="append", help="CA public key hex; default is the seed's CA")
    s.add_argument("--on-chain", action="store_true", help="also cross-check against the ledger")

    s = sub.add_parser("run-scenario", parents=[common])
    s.add_argument("--config", help="ScenarioConfig JSON file")
    s.add_argument("--attack", choices=[a.value for a in Attack])
    s.add_argument("--suite", action="store_true", help="run every attack and check each is rejected")

    s = sub.add_parser("gas-report", parents=[common])
    s.add_argument("--reference", action="store_true", help="report the reference lifecycle instead of the ledger")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = CliConfig.from_args(args)
    try:
        if cfg.tau[1] <= 0 or not 0 < cfg.tau[0] <= cfg.tau[1]:
            raise CliInputError("threshold must satisfy 0 < tau-num <= tau-den")
        code, result = COMMANDS[args.command](cfg, args)
    except (CliInputError, BaidError, ValueError, KeyError, OSError) as exc:
        print(f"baid {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = json.dumps(result, sort_keys=True, indent=2)
    print(text)
    if cfg.out is not None:
        cfg.out.write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
