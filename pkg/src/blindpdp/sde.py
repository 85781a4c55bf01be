"""Multi-user searchable encryption over a Schnorr subgroup.

Every user holds one share ``x1`` of the master exponent ``x``; the server
holds the matching ``x2 = x - x1 mod q``. Ciphertexts and trapdoors are made
in two rounds (client, then server) so that the server ends up with a
user-independent form it can match without learning the element.

All functions are pure; randomness comes from an explicit ``rng`` keyword
that defaults to the system CSPRNG.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol

from Crypto.Util.number import getPrime, inverse, isPrime

from . import instrumentation
from .errors import (
    AlreadyIssuedError,
    ConfigurationError,
    GenerationFailedError,
    UserNotFoundError,
)

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

HASH_SHA256 = "sha256"
HASH_IDENTITY = "identity"
PRF_HMAC_SHA256 = "hmac-sha256"
PRF_IDENTITY = "identity"

_HASH_IDS = frozenset({HASH_SHA256, HASH_IDENTITY})
_PRF_IDS = frozenset({PRF_HMAC_SHA256, PRF_IDENTITY})

PRF_KEY_BYTES = 32
_SUBGROUP_RETRIES = 8

# name -> (modulus bits, subgroup bits); "toy" is the fixed group of toy_params
PROFILES: dict[str, tuple[int, int]] = {
    "prod": (2048, 256),
}
PROFILE_NAMES = ("toy", *PROFILES)


class RandomSource(Protocol):
    def randint(self, a: int, b: int) -> int: ...

    def randbytes(self, n: int) -> bytes: ...


_system_random = secrets.SystemRandom()


# ---------------------------------------------------------------------------
# Key material and ciphertexts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PublicParams:
    """System-wide public parameters."""

    p: int
    q: int
    g: int
    h: int
    hash_id: str = HASH_SHA256
    prf_id: str = PRF_HMAC_SHA256
    security_bits: int = 0

    def __post_init__(self) -> None:
        if self.hash_id not in _HASH_IDS:
            raise ConfigurationError(f"Unknown hash identifier {self.hash_id!r}")
        if self.prf_id not in _PRF_IDS:
            raise ConfigurationError(f"Unknown PRF identifier {self.prf_id!r}")

    @property
    def element_width(self) -> int:
        """Byte width of a serialized group element."""
        return (self.p.bit_length() + 7) // 8

    @property
    def digest_size(self) -> int:
        if self.hash_id == HASH_IDENTITY:
            return self.element_width
        return hashlib.sha256().digest_size

    @property
    def profile(self) -> str | None:
        """Name of the profile these params were generated for, if any."""
        if self.hash_id == HASH_IDENTITY:
            return "toy"
        sizes = (self.p.bit_length(), self.q.bit_length())
        return next((name for name, bits in PROFILES.items() if bits == sizes), None)

    def encode_element(self, z: int) -> bytes:
        return z.to_bytes(self.element_width, "big")

    def hash_element(self, z: int) -> bytes:
        """H applied to the fixed-width big-endian encoding of *z*."""
        data = self.encode_element(z)
        if self.hash_id == HASH_IDENTITY:
            return data
        return hashlib.sha256(data).digest()

    def is_member(self, z: int) -> bool:
        return 0 < z < self.p and pow(z, self.q, self.p) == 1

    def validate(self) -> None:
        """Check the subgroup structure; raises ``ConfigurationError``."""
        if self.q < 2 or (self.p - 1) % self.q:
            raise ConfigurationError("q must divide p - 1")
        if self.g == 1 or not self.is_member(self.g):
            raise ConfigurationError("g must generate the order-q subgroup")
        if not self.is_member(self.h):
            raise ConfigurationError("h must lie in the order-q subgroup")


@dataclass(frozen=True)
class MasterSecretKey:
    x: int = field(repr=False)
    s: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not self.s:
            raise ConfigurationError("PRF key must not be empty")


@dataclass(frozen=True)
class ClientKeySet:
    """The user's half of a key split, delivered out of band."""

    user_id: str
    x1: int = field(repr=False)
    s: bytes = field(repr=False)


@dataclass(frozen=True)
class ServerKeySet:
    """The server's half of a key split."""

    user_id: str
    x2: int = field(repr=False)


@dataclass(frozen=True)
class ClientEncryptedElement:
    c1_hat: int
    c2_hat: int
    c3_hat: bytes


@dataclass(frozen=True)
class ServerEncryptedElement:
    c1: int
    c2: bytes


@dataclass(frozen=True)
class ClientTrapdoor:
    t1: int
    t2: int


@dataclass(frozen=True)
class ServerTrapdoor:
    t: int


class KeyStore:
    """Server-side map from user identity to server key share.

    Revoking a user is deleting the entry; nothing encrypted under the
    user's client key needs to be touched.
    """

    def __init__(self, entries: Iterable[ServerKeySet] = ()) -> None:
        self._entries: dict[str, ServerKeySet] = {}
        self._lock = threading.Lock()
        for entry in entries:
            self.add(entry)

    def add(self, key: ServerKeySet, *, replace: bool = False) -> None:
        with self._lock:
            if key.user_id in self._entries and not replace:
                raise AlreadyIssuedError(key.user_id)
            self._entries[key.user_id] = key

    def get(self, user_id: str) -> ServerKeySet:
        try:
            return self._entries[user_id]
        except KeyError:
            raise UserNotFoundError(user_id) from None

    def remove(self, user_id: str) -> bool:
        with self._lock:
            return self._entries.pop(user_id, None) is not None

    def user_ids(self) -> list[str]:
        return sorted(self._entries)

    def __contains__(self, user_id: object) -> bool:
        return user_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ServerKeySet]:
        return iter([self._entries[uid] for uid in self.user_ids()])


# ---------------------------------------------------------------------------
# Setup
# ---------------------------------------------------------------------------


def _search_modulus(
    q: int, p_bits: int, rng: RandomSource, attempts: int
) -> int | None:
    # p = k*q + 1 with k even and p exactly p_bits long
    lo = -(-((1 << (p_bits - 1)) - 1) // q)
    hi = ((1 << p_bits) - 2) // q
    lo += lo % 2
    if lo > hi:
        return None
    span = (hi - lo) // 2
    for _ in range(attempts):
        k = lo + 2 * rng.randint(0, span)
        p = k * q + 1
        if isPrime(p, randfunc=rng.randbytes):
            return p
    return None


def _find_generator(p: int, q: int, rng: RandomSource) -> int:
    cofactor = (p - 1) // q
    while True:
        g = pow(rng.randint(2, p - 2), cofactor, p)
        if g != 1:
            return g


def init(
    security_bits: int,
    deterministic_seed: bytes | int | None = None,
    *,
    subgroup_bits: int | None = None,
    max_attempts: int | None = None,
) -> tuple[PublicParams, MasterSecretKey]:
    """Generate public parameters and the master secret key.

    ``security_bits`` is the modulus size. The subgroup size defaults to
    half of it, capped at 256 bits. A fixed ``deterministic_seed`` makes the
    output reproducible and is meant for tests only.
    """
    if security_bits < 8:
        raise ConfigurationError("security_bits must be at least 8")
    q_bits = subgroup_bits or min(256, max(4, security_bits // 2))
    if q_bits < 2 or q_bits >= security_bits - 1:
        raise ConfigurationError(
            f"subgroup_bits={q_bits} does not fit a {security_bits}-bit modulus"
        )
    rng: RandomSource = (
        random.Random(deterministic_seed)
        if deterministic_seed is not None
        else _system_random
    )
    attempts = max_attempts or max(64, 4 * security_bits)

    for _ in range(_SUBGROUP_RETRIES):
        q = getPrime(q_bits, randfunc=rng.randbytes)
        p = _search_modulus(q, security_bits, rng, attempts)
        if p is not None:
            break
    else:
        raise GenerationFailedError(
            f"no {security_bits}-bit prime p = kq + 1 found after "
            f"{_SUBGROUP_RETRIES} subgroups"
        )

    g = _find_generator(p, q, rng)
    x = rng.randint(1, q - 1)
    s = rng.randbytes(PRF_KEY_BYTES)
    params = PublicParams(
        p=p,
        q=q,
        g=g,
        h=pow(g, x, p),
        hash_id=HASH_SHA256,
        prf_id=PRF_HMAC_SHA256,
        security_bits=security_bits,
    )
    return params, MasterSecretKey(x=x, s=s)


def toy_params(x: int = 7, s: bytes = b"toy") -> tuple[PublicParams, MasterSecretKey]:
    """The p=23, q=11, g=2 group with pass-through hash and PRF.

    Only for hand-checkable arithmetic; eleven exponents cannot keep
    distinct elements apart.
    """
    params = PublicParams(
        p=23,
        q=11,
        g=2,
        h=pow(2, x, 23),
        hash_id=HASH_IDENTITY,
        prf_id=PRF_IDENTITY,
        security_bits=8,
    )
    return params, MasterSecretKey(x=x, s=s)


def profile_params(
    profile: str, deterministic_seed: bytes | int | None = None
) -> tuple[PublicParams, MasterSecretKey]:
    if profile == "toy":
        return toy_params()
    try:
        p_bits, q_bits = PROFILES[profile]
    except KeyError:
        raise ConfigurationError(
            f"Unknown profile {profile!r}. Expected one of {list(PROFILE_NAMES)}."
        ) from None
    return init(p_bits, deterministic_seed, subgroup_bits=q_bits)


def keygen(
    msk: MasterSecretKey,
    params: PublicParams,
    user_id: str,
    *,
    rng: RandomSource | None = None,
) -> tuple[ClientKeySet, ServerKeySet]:
    if not user_id:
        raise ValueError("user_id must not be empty")
    rng = rng or _system_random
    x1 = rng.randint(1, params.q - 1)
    x2 = (msk.x - x1) % params.q
    return ClientKeySet(user_id, x1, msk.s), ServerKeySet(user_id, x2)


# ---------------------------------------------------------------------------
# Element exponents
# ---------------------------------------------------------------------------


def canonical_bytes(element: str) -> bytes:
    """Exact UTF-8 bytes of an element; no case or Unicode folding."""
    if not element:
        raise ValueError("element must not be empty")
    return element.encode("utf-8")


def _prf(prf_id: str, key: bytes, data: bytes) -> bytes:
    if prf_id == PRF_IDENTITY:
        return data
    return hmac.new(key, data, hashlib.sha256).digest()


def derive_sigma(element: str, s: bytes, params: PublicParams) -> int:
    """Map an element into a non-zero exponent mod q."""
    data = canonical_bytes(element)
    probe = data
    for counter in range(1, 257):
        sigma = int.from_bytes(_prf(params.prf_id, s, probe), "big") % params.q
        if sigma:
            return sigma
        probe = data + bytes([counter % 256])
    raise GenerationFailedError("could not derive a non-zero exponent")


def _fresh_exponent(params: PublicParams, rng: RandomSource | None) -> int:
    return (rng or _system_random).randint(1, params.q - 1)


# ---------------------------------------------------------------------------
# Encryption
# ---------------------------------------------------------------------------


def client_enc_raw(
    sigma: int, r: int, x1: int, params: PublicParams
) -> ClientEncryptedElement:
    p, q = params.p, params.q
    c1_hat = pow(params.g, (r + sigma) % q, p)
    return ClientEncryptedElement(
        c1_hat=c1_hat,
        c2_hat=pow(c1_hat, x1, p),
        c3_hat=params.hash_element(pow(params.h, r, p)),
    )


def client_enc(
    element: str,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientEncryptedElement:
    instrumentation.record(instrumentation.CLIENT_ENC)
    sigma = derive_sigma(element, key.s, params)
    return client_enc_raw(sigma, _fresh_exponent(params, rng), key.x1, params)


def server_reenc(
    c: ClientEncryptedElement, sk: ServerKeySet, params: PublicParams
) -> ServerEncryptedElement:
    """c1 = c1_hat^x2 * c2_hat = h^(r + sigma); c2 passes through."""
    instrumentation.record(instrumentation.SERVER_REENC)
    c1 = pow(c.c1_hat, sk.x2, params.p) * c.c2_hat % params.p
    return ServerEncryptedElement(c1=c1, c2=c.c3_hat)


# ---------------------------------------------------------------------------
# Trapdoors and matching
# ---------------------------------------------------------------------------


def client_td_raw(sigma: int, r: int, x1: int, params: PublicParams) -> ClientTrapdoor:
    p, q, g = params.p, params.q, params.g
    # g^(x2 r) is formed as h^r * g^(-x1 r) so the client never needs x2
    t2 = pow(params.h, r, p) * pow(g, (-x1 * r) % q, p) % p
    t2 = t2 * pow(g, (x1 * sigma) % q, p) % p
    return ClientTrapdoor(t1=pow(g, (sigma - r) % q, p), t2=t2)


def client_td(
    element: str,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientTrapdoor:
    instrumentation.record(instrumentation.CLIENT_TD)
    sigma = derive_sigma(element, key.s, params)
    return client_td_raw(sigma, _fresh_exponent(params, rng), key.x1, params)


def server_td(
    td: ClientTrapdoor, sk: ServerKeySet, params: PublicParams
) -> ServerTrapdoor:
    """t1^x2 * t2 = g^(x * sigma), the same for every user and draw."""
    instrumentation.record(instrumentation.SERVER_TD)
    return ServerTrapdoor(t=pow(td.t1, sk.x2, params.p) * td.t2 % params.p)


def match(
    c: ServerEncryptedElement, t: ServerTrapdoor, params: PublicParams
) -> bool:
    instrumentation.record(instrumentation.MATCH)
    blinded = c.c1 * inverse(t.t, params.p) % params.p
    return hmac.compare_digest(c.c2, params.hash_element(blinded))


def match_any(
    c: ServerEncryptedElement,
    trapdoors: Iterable[ServerTrapdoor],
    params: PublicParams,
) -> bool:
    return any(match(c, t, params) for t in trapdoors)
