"""Offline trusted key management authority.

The TKMA state file is the only place the master secret key is written.
Issuing a user produces two files: the client key, delivered to the user
out of band, and the server key, imported by the service.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from .codec import DocumentCodec
from .errors import AlreadyIssuedError, StoreFormatError
from .sde import (
    ClientKeySet,
    MasterSecretKey,
    PublicParams,
    RandomSource,
    ServerKeySet,
    init,
    keygen,
    profile_params,
)
from .store import read_tagged, write_tagged

TKMA_DOCUMENT = "tkma"
CLIENT_KEY_DOCUMENT = "client-key"
SERVER_KEY_DOCUMENT = "server-key"

_codec = DocumentCodec()


@dataclass
class TkmaState:
    params: PublicParams
    msk: MasterSecretKey = field(repr=False)
    issued: set[str] = field(default_factory=set)


def tkma_init(
    security_bits: int | None = None,
    seed: bytes | int | None = None,
    *,
    profile: str | None = None,
    subgroup_bits: int | None = None,
) -> TkmaState:
    """Set up a fresh group, either from a named profile or explicit sizes."""
    if profile is not None:
        params, msk = profile_params(profile, seed)
    else:
        params, msk = init(security_bits or 2048, seed, subgroup_bits=subgroup_bits)
    return TkmaState(params=params, msk=msk)


def issue_rng(seed: bytes | int | str, user_id: str) -> random.Random:
    """Deterministic per-user generator for reproducible test stores."""
    return random.Random(f"{seed}:{user_id}")


def tkma_issue(
    state: TkmaState, user_id: str, *, rng: RandomSource | None = None
) -> tuple[ClientKeySet, ServerKeySet]:
    if user_id in state.issued:
        raise AlreadyIssuedError(user_id)
    client_key, server_key = keygen(state.msk, state.params, user_id, rng=rng)
    state.issued.add(user_id)
    return client_key, server_key


def tkma_revoke(state: TkmaState, user_id: str) -> bool:
    """Forget that ``user_id`` was issued so a new key pair can be made."""
    if user_id not in state.issued:
        return False
    state.issued.discard(user_id)
    return True


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def save_tkma(state: TkmaState, path: str | os.PathLike[str]) -> None:
    write_tagged(
        Path(path),
        TKMA_DOCUMENT,
        {
            "params": _codec.dump_params(state.params),
            "msk": _codec.dump_msk(state.msk),
            "issued": sorted(state.issued),
        },
    )


def load_tkma(path: str | os.PathLike[str]) -> TkmaState:
    items = read_tagged(Path(path), TKMA_DOCUMENT)
    try:
        return TkmaState(
            params=_codec.load_params(items["params"]),
            msk=_codec.load_msk(items["msk"]),
            issued={str(u) for u in items["issued"]},
        )
    except (KeyError, TypeError) as e:
        raise StoreFormatError(f"Malformed TKMA state in {path}: {e!r}") from e


def save_client_key(
    key: ClientKeySet, params: PublicParams, path: str | os.PathLike[str]
) -> None:
    write_tagged(
        Path(path),
        CLIENT_KEY_DOCUMENT,
        {"params": _codec.dump_params(params), "key": _codec.dump_client_key(key)},
    )


def load_client_key(path: str | os.PathLike[str]) -> tuple[ClientKeySet, PublicParams]:
    items = read_tagged(Path(path), CLIENT_KEY_DOCUMENT)
    try:
        return _codec.load_client_key(items["key"]), _codec.load_params(items["params"])
    except (KeyError, TypeError) as e:
        raise StoreFormatError(f"Malformed client key file {path}: {e!r}") from e


def save_server_key(
    key: ServerKeySet, params: PublicParams, path: str | os.PathLike[str]
) -> None:
    write_tagged(
        Path(path),
        SERVER_KEY_DOCUMENT,
        {"params": _codec.dump_params(params), "key": _codec.dump_server_key(key)},
    )


def load_server_key(path: str | os.PathLike[str]) -> tuple[ServerKeySet, PublicParams]:
    items = read_tagged(Path(path), SERVER_KEY_DOCUMENT)
    try:
        return _codec.load_server_key(items["key"]), _codec.load_params(items["params"])
    except (KeyError, TypeError) as e:
        raise StoreFormatError(f"Malformed server key file {path}: {e!r}") from e
