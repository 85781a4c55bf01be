"""Tests for the blindpdp command line."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from blindpdp.cli import EXIT_DENY, EXIT_ERROR, EXIT_OK, _hierarchy, _permission, main
from blindpdp.errors import ConfigurationError
from blindpdp.store import COLLECTIONS

from testsupport.keys import MID_BITS, MID_SUBGROUP_BITS, TEST_SEED


@pytest.fixture(autouse=True)
def _no_store_env(monkeypatch):
    monkeypatch.delenv("BLINDPDP_STORE", raising=False)
    monkeypatch.delenv("BLINDPDP_PROFILE", raising=False)


@pytest.fixture(scope="module")
def keys(tmp_path_factory) -> Path:
    """TKMA state plus key files for admin and alice."""
    root = tmp_path_factory.mktemp("keys")
    tkma = str(root / "tkma.json")
    assert main(
        [
            "tkma",
            "init",
            "--tkma",
            tkma,
            "--bits",
            str(MID_BITS),
            "--subgroup-bits",
            str(MID_SUBGROUP_BITS),
            "--seed",
            str(TEST_SEED),
        ]
    ) == EXIT_OK
    for user in ("admin", "alice"):
        assert main(
            [
                "tkma",
                "issue",
                "--tkma",
                tkma,
                user,
                "--client-out",
                str(root / f"{user}.client.json"),
                "--server-out",
                str(root / f"{user}.server.json"),
                "--seed",
                str(TEST_SEED),
            ]
        ) == EXIT_OK
    return root


@pytest.fixture
def store(tmp_path, keys) -> str:
    path = str(tmp_path / "store")
    for user in ("admin", "alice"):
        assert main(["admin", "import-key", str(keys / f"{user}.server.json"), "--store", path]) == 0
    return path


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class _Cli:
    def __init__(self, store: str, keys: Path) -> None:
        self.store = store
        self.keys = keys

    def admin(self, verb: str, *args: str) -> int:
        return main(
            ["admin", verb, *args, "--store", self.store, "--key", str(self.keys / "admin.client.json")]
        )

    def requester(self, verb: str, *args: str, user: str = "alice") -> int:
        return main(
            [
                "requester",
                verb,
                *args,
                "--store",
                self.store,
                "--key",
                str(self.keys / f"{user}.client.json"),
            ]
        )


@pytest.fixture
def cli(store, keys) -> _Cli:
    return _Cli(store, keys)


# ---------------------------------------------------------------------------
# tkma
# ---------------------------------------------------------------------------


class TestTkma:
    def test_init_json(self, tmp_path, capsys):
        path = str(tmp_path / "tkma.json")
        assert main(["tkma", "init", "--tkma", path, "--profile", "toy", "--json"]) == EXIT_OK
        assert _json_out(capsys) == {"p_bits": 5, "q_bits": 4, "hash": "identity"}

    def test_issue_twice(self, tmp_path, capsys):
        path = str(tmp_path / "tkma.json")
        main(["tkma", "init", "--tkma", path, "--profile", "toy"])
        args = [
            "tkma",
            "issue",
            "--tkma",
            path,
            "bob",
            "--client-out",
            str(tmp_path / "c.json"),
            "--server-out",
            str(tmp_path / "s.json"),
        ]
        assert main(args) == EXIT_OK
        assert main(args) == EXIT_ERROR
        assert "already-issued" in capsys.readouterr().err
        assert main(["tkma", "revoke", "--tkma", path, "bob"]) == EXIT_OK
        assert main(args) == EXIT_OK


# ---------------------------------------------------------------------------
# admin and requester
# ---------------------------------------------------------------------------


class TestPolicies:
    def test_deploy_and_request(self, cli, capsys):
        capsys.readouterr()
        assert cli.admin("deploy-policy", "if Location=ward then can <Doctor, read, chart>", "--json") == 0
        assert _json_out(capsys) == {"policy_id": "policy-000001"}

        assert cli.requester("request", "Doctor", "read", "chart", "--attr", "Location=ward") == EXIT_OK
        assert cli.requester("request", "Doctor", "read", "chart") == EXIT_DENY
        capsys.readouterr()
        assert cli.requester("request", "Nurse", "read", "chart", "--json") == EXIT_DENY
        assert _json_out(capsys) == {"permit": False, "reason": "no-matching-policy"}

    def test_delete_policy(self, cli):
        cli.admin("deploy-policy", "can <Doctor, read, chart>")
        assert cli.admin("delete-policy", "policy-000001") == EXIT_OK
        assert cli.requester("request", "Doctor", "read", "chart") == EXIT_DENY

    def test_syntax_error(self, cli, capsys):
        assert cli.admin("deploy-policy", "can <Doctor, read>") == EXIT_ERROR
        assert "policy-syntax" in capsys.readouterr().err

    def test_attribute_source_key(self, cli, keys):
        cli.admin("deploy-policy", "if Shift=day then can <Doctor, read, chart>")
        source = str(keys / "admin.client.json")
        assert cli.requester(
            "request", "Doctor", "read", "chart", "--attr", "Shift=day", "--attr-key", source
        ) == EXIT_OK


class TestRbac:
    def test_role_flow(self, cli):
        assert cli.admin("assign-roles", "alice", "Cardiologist", "--when", "Location=ward") == 0
        assert cli.admin("assign-permissions", "Intern", "read:handbook") == EXIT_OK
        assert cli.admin("deploy-hierarchy", "Cardiologist:Doctor", "Doctor:Intern") == EXIT_OK

        assert cli.requester("access", "Cardiologist", "read", "handbook") == EXIT_DENY
        assert cli.requester("activate-role", "Cardiologist") == EXIT_DENY
        assert cli.requester("activate-role", "Cardiologist", "--attr", "Location=ward") == EXIT_OK
        assert cli.requester("access", "Cardiologist", "read", "handbook") == EXIT_OK
        assert cli.requester("deactivate-role", "Cardiologist") == EXIT_OK
        assert cli.requester("access", "Cardiologist", "read", "handbook") == EXIT_DENY

    def test_clear_session(self, cli, capsys):
        cli.admin("assign-roles", "alice", "Doctor")
        cli.requester("activate-role", "Doctor")
        capsys.readouterr()
        assert cli.requester("clear-session", "--json") == EXIT_OK
        assert _json_out(capsys) == {"cleared": 1}

    def test_bad_permission(self, cli, capsys):
        assert cli.admin("assign-permissions", "Intern", "read-handbook") == EXIT_ERROR
        assert "ACTION:TARGET" in capsys.readouterr().err


class TestConstraints:
    def test_hbdsod(self, cli):
        assert cli.admin(
            "deploy-constraint", "hbdsod", "--objtype", "PO", "--members", "Issue,Approve"
        ) == EXIT_OK
        egrant = ["--role", "Clerk", "--objtype", "PO", "--instance", "#9"]
        assert cli.requester("egrant-request", "--action", "Issue", *egrant) == EXIT_OK
        assert cli.requester("egrant-request", "--action", "Approve", *egrant) == EXIT_DENY
        assert cli.admin("delete-constraint", "constraint-000001") == EXIT_OK
        assert cli.requester("egrant-request", "--action", "Approve", *egrant) == EXIT_OK

    def test_chinese_wall(self, cli):
        assert cli.admin(
            "deploy-constraint", "cw", "--objtype", "Bank", "--branch", "Google", "--branch", "Microsoft"
        ) == EXIT_OK
        read = ["--role", "Analyst", "--action", "read", "--objtype", "Bank", "--instance", "q3"]
        assert cli.requester("egrant-request", *read, "--domain", "Google") == EXIT_OK
        assert cli.requester("egrant-request", *read, "--domain", "Microsoft") == EXIT_DENY

    def test_hbdsod_needs_members(self, cli):
        assert cli.admin("deploy-constraint", "hbdsod", "--objtype", "PO") == EXIT_ERROR


# ---------------------------------------------------------------------------
# store and errors
# ---------------------------------------------------------------------------


class TestStoreAndErrors:
    def test_dump(self, cli, capsys):
        cli.admin("deploy-policy", "can <Doctor, read, chart>")
        capsys.readouterr()
        assert main(["store", "dump", "--store", cli.store, "--json"]) == EXIT_OK
        documents = _json_out(capsys)
        assert set(documents) == set(COLLECTIONS)
        assert len(documents["policies"]["items"]) == 1

    def test_dump_table(self, cli, capsys):
        assert main(["store", "dump", "--store", cli.store, "--collection", "keystore"]) == 0
        assert "keystore" in capsys.readouterr().out

    def test_missing_store(self, keys, capsys):
        key = str(keys / "alice.client.json")
        assert main(["requester", "request", "a", "b", "c", "--key", key]) == EXIT_ERROR
        assert "--store" in capsys.readouterr().err

    def test_error_as_json(self, tmp_path, keys, capsys):
        key = str(keys / "alice.client.json")
        args = ["requester", "clear-session", "--key", key, "--store", str(tmp_path), "--json"]
        assert main(args) == EXIT_ERROR
        assert _json_out(capsys)["error"]["code"] == "configuration"

    def test_key_from_other_group(self, store, tmp_path, capsys):
        tkma = str(tmp_path / "toy.json")
        main(["tkma", "init", "--tkma", tkma, "--profile", "toy"])
        server = str(tmp_path / "eve.server.json")
        main(["tkma", "issue", "--tkma", tkma, "eve", "--client-out", str(tmp_path / "c"), "--server-out", server])
        capsys.readouterr()
        assert main(["admin", "import-key", server, "--store", store]) == EXIT_ERROR
        assert "different public parameters" in capsys.readouterr().err

    def test_no_command(self, capsys):
        assert main([]) == EXIT_ERROR


class TestProfiles:
    def test_key_from_another_profile(self, cli, capsys):
        assert cli.admin("deploy-policy", "can <Doctor, read, chart>", "--profile", "prod") == EXIT_ERROR
        assert "does not hold a prod group" in capsys.readouterr().err

    def test_profile_from_environment(self, cli, monkeypatch, capsys):
        monkeypatch.setenv("BLINDPDP_PROFILE", "toy")
        assert cli.requester("clear-session") == EXIT_ERROR
        assert "does not hold a toy group" in capsys.readouterr().err

    def test_import_refused_before_store_is_created(self, keys, tmp_path):
        path = tmp_path / "store"
        server = str(keys / "admin.server.json")
        args = ["admin", "import-key", server, "--store", str(path), "--profile", "toy"]
        assert main(args) == EXIT_ERROR
        assert not path.exists()

    def test_matching_profile(self, tmp_path):
        tkma = str(tmp_path / "toy.json")
        main(["tkma", "init", "--tkma", tkma, "--profile", "toy"])
        server = str(tmp_path / "eve.server.json")
        main(["tkma", "issue", "--tkma", tkma, "eve", "--client-out", str(tmp_path / "c"), "--server-out", server])
        store = str(tmp_path / "store")
        assert main(["admin", "import-key", server, "--store", store, "--profile", "toy"]) == 0
        assert main(["admin", "revoke-user", "eve", "--store", store, "--profile", "toy"]) == 0


class TestOutput:
    def test_names_are_printed_literally(self, cli, capsys):
        capsys.readouterr()
        assert cli.admin("assign-permissions", "[bold]Doctor", "read:chart") == EXIT_OK
        assert "permissions-000001: [bold]Doctor" in capsys.readouterr().out

    def test_deactivate_prints_role_literally(self, cli, capsys):
        capsys.readouterr()
        assert cli.requester("deactivate-role", "[red]Nurse") == EXIT_OK
        assert "[red]Nurse: not active" in capsys.readouterr().out


class TestParsingHelpers:
    def test_permission(self):
        assert _permission("read:chart") == ("read", "chart")
        with pytest.raises(ConfigurationError):
            _permission(":chart")

    def test_hierarchy(self):
        assert _hierarchy(["A:B,C", "A:D", "E:"]) == {"A": ["B", "C", "D"], "E": []}
        with pytest.raises(ConfigurationError, match="DERIVED:BASE"):
            _hierarchy(["A"])
