from testsupport.keys import TEST_SEED, KeyRing, key_ring, mid_group, mid_ring, toy_ring
from testsupport.scenarios import OracleWorld, comparable, policy_clients, run_encrypted

__all__ = (
    "TEST_SEED",
    "KeyRing",
    "key_ring",
    "mid_group",
    "mid_ring",
    "toy_ring",
    "OracleWorld",
    "comparable",
    "policy_clients",
    "run_encrypted",
)
