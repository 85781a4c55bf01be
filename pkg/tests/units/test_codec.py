"""Tests for the document codec."""

from __future__ import annotations

import pytest

from blindpdp.codec import (
    DocumentCodec,
    decode_bytes,
    decode_int,
    dumps,
    encode_int,
    loads,
)
from blindpdp.constraint_engine import (
    ConstraintEngine,
    constraint_enc,
    hbdsod_constraint,
    request_generate,
)
from blindpdp.dsl import parse_policy
from blindpdp.errors import ConfigurationError, InvalidTreeError, StoreFormatError
from blindpdp.policy import AttributeSet, Decision
from blindpdp.policy_engine import PolicyEngine, policy_enc
from blindpdp.rbac_engine import hierarchy_enc, hierarchy_reenc
from blindpdp.sde import ServerEncryptedElement, toy_params

from testsupport.keys import key_ring

codec = DocumentCodec()


class TestScalars:
    def test_int_encoding(self):
        assert encode_int(0) == "0"
        assert encode_int(255) == "ff"
        assert decode_int("1f") == 31

    @pytest.mark.parametrize("text", ["", "0x1f", "1F", "01", 31])
    def test_int_rejects_noncanonical(self, text):
        with pytest.raises(StoreFormatError):
            decode_int(text)

    def test_negative(self):
        with pytest.raises(ValueError):
            encode_int(-1)

    def test_bytes(self):
        assert decode_bytes("00ff") == b"\x00\xff"
        with pytest.raises(StoreFormatError):
            decode_bytes("0")
        with pytest.raises(StoreFormatError):
            decode_bytes("AB")

    def test_dumps_is_sorted(self):
        assert dumps({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_loads_error(self):
        with pytest.raises(StoreFormatError, match="Invalid JSON"):
            loads("{")


class TestParams:
    def test_toy_params(self):
        params, _ = toy_params()
        doc = codec.dump_params(params)
        assert doc["p"] == "17"
        assert doc["hash_id"] == params.hash_id
        assert codec.load_params(doc) == params

    def test_inconsistent_params(self):
        params, _ = toy_params()
        doc = codec.dump_params(params) | {"g": "5"}
        with pytest.raises(StoreFormatError, match="Inconsistent"):
            codec.load_params(doc)

    def test_missing_field(self):
        with pytest.raises(StoreFormatError, match="Malformed params"):
            codec.load_params({"p": "17"})

    def test_unknown_hash(self):
        params, _ = toy_params()
        with pytest.raises(ConfigurationError, match="hash"):
            codec.load_params(codec.dump_params(params) | {"hash_id": "md5"})

    def test_secret_keys(self):
        _, msk = toy_params()
        assert codec.dump_msk(msk) == {"x": "7", "s": b"toy".hex()}
        assert codec.load_msk(codec.dump_msk(msk)) == msk


class TestDeployedObjects:
    @pytest.fixture(scope="class")
    def ring(self, group):
        params, msk = group
        return key_ring(params, msk, ["admin", "alice"])

    def test_policy_dump_is_stable(self, ring, rng):
        spec = parse_policy(
            "if kofn(2, Location=ward, AT>9#5, Shift=day) then can <Doctor, read, chart>"
        )
        engine = PolicyEngine(ring.params, ring.keystore())
        client = policy_enc(spec.tuple, spec.condition, ring["admin"], ring.params, rng=rng)
        client_doc = codec.dump_client_policy(client)
        assert codec.load_client_policy(client_doc) == client
        policy = engine.deploy_policy("admin", codec.load_client_policy(client_doc))
        doc = codec.dump_policy(policy)
        assert doc["condition"]["gate"] == "threshold"
        assert doc["condition"]["k"] == 2
        loaded = codec.load_policy(loads(dumps(doc)))
        assert loaded == policy
        assert dumps(codec.dump_policy(loaded)) == dumps(doc)

    def test_hierarchy(self, ring, rng):
        client = hierarchy_enc({"A": ["B"], "B": ["C"]}, ring["admin"], ring.params, rng=rng)
        assert codec.load_client_hierarchy(codec.dump_client_hierarchy(client)) == client
        graph = hierarchy_reenc(client, "admin", ring.keystore(), ring.params)
        assert codec.load_hierarchy(codec.dump_hierarchy(graph)) == graph

    def test_constraint_and_history(self, ring, rng):
        engine = ConstraintEngine(ring.params, ring.keystore())
        spec = hbdsod_constraint(["Issue", "Approve"], "PO", ["Branch=north"], max_actions=1)
        client = constraint_enc(spec, ring["admin"], ring.params, rng=rng)
        assert codec.load_client_constraint(codec.dump_client_constraint(client)) == client
        deployed = engine.deploy_constraint("admin", client)
        doc = codec.dump_constraint(deployed)
        assert doc["options"]["max_actions"] == 1
        assert codec.load_constraint(doc) == deployed

        request = request_generate(
            "Clerk",
            "Issue",
            "PO",
            "#1",
            ("north",),
            AttributeSet.parse(["Branch=north"]),
            ring["alice"],
            ring.params,
            rng=rng,
        )
        assert codec.load_egrant_request(codec.dump_egrant_request(request)) == request
        engine.evaluate(request)
        (record,) = engine.dump_history("alice")
        assert codec.load_record(codec.dump_record(record)) == record


class TestMalformed:
    def test_const_must_be_boolean(self):
        with pytest.raises(StoreFormatError, match="boolean"):
            codec.load_tree({"const": 1}, codec.load_cipher)

    def test_unknown_gate(self):
        with pytest.raises(StoreFormatError, match="unknown gate"):
            codec.load_tree({"gate": "xor", "children": []}, codec.load_cipher)

    def test_invalid_tree_keeps_its_error(self):
        with pytest.raises(InvalidTreeError):
            codec.load_tree({"gate": "and", "children": []}, codec.load_cipher)

    def test_bad_threshold(self):
        doc = {"gate": "threshold", "k": 3, "children": [{"const": True}]}
        with pytest.raises(InvalidTreeError):
            codec.load_tree(doc, codec.load_cipher)

    def test_non_mapping(self):
        with pytest.raises(StoreFormatError):
            codec.load_tree(["leaf"], codec.load_cipher)

    def test_cipher_fields(self):
        with pytest.raises(StoreFormatError, match="ciphertext"):
            codec.load_cipher({"c1": "ff"})
        assert codec.load_cipher({"c1": "ff", "c2": "00"}) == ServerEncryptedElement(255, b"\x00")


class TestDecision:
    def test_decision_document(self):
        doc = codec.dump_decision(Decision.grant(["policy-000003"]))
        assert doc == {"permit": True, "reason": None, "matched": ["policy-000003"]}
        assert codec.load_decision(doc) == Decision.grant(["policy-000003"])
        assert codec.load_decision({"permit": False, "reason": "no-matching-policy"}) == (
            Decision.deny("no-matching-policy")
        )
