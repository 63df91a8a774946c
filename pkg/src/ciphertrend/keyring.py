"""Per-trader key material held by the aggregator"""

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import structlog

from .backends.he import HEBackend
from .core.scheme import CkksContext, KeyMaterial, PublicKey
from .core.serialization import serialize_public_key
from .errors import ProtocolError
from .models import SchemeParams, TraderIdentity

logger = structlog.get_logger()


def fingerprint(pk: PublicKey) -> str:
    """SHA-256 of the serialized public key, hex encoded"""
    return hashlib.sha256(serialize_public_key(pk)).hexdigest()


def _trader_seed(seed: Optional[int], trader_id: str) -> Optional[np.random.SeedSequence]:
    if seed is None:
        return None
    digest = hashlib.sha256(trader_id.encode("utf-8")).digest()
    return np.random.SeedSequence([seed, int.from_bytes(digest[:8], "big")])


@dataclass
class TraderKeys:
    identity: TraderIdentity
    material: KeyMaterial
    backend: HEBackend


class KeyRing:
    """Issues one key set per trader and looks traders up by id

    Seeded key rings derive each trader's randomness from the seed and the
    trader id, so connection order does not change keys or ciphertexts.
    """

    def __init__(self, params: SchemeParams, seed: Optional[int] = None):
        self.params = params
        self.seed = seed
        self._keys: Dict[str, TraderKeys] = {}
        self.logger = logger.bind(component="keyring")

    def issue(self, trader_id: str) -> TraderKeys:
        if trader_id in self._keys:
            raise ProtocolError(f"Trader id already registered: {trader_id}", code=2)
        rng = np.random.default_rng(_trader_seed(self.seed, trader_id))
        context = CkksContext(self.params, rng=rng)
        material = context.keygen()
        identity = TraderIdentity(trader_id=trader_id, fingerprint=fingerprint(material.public))
        keys = TraderKeys(
            identity=identity,
            material=material,
            backend=HEBackend.from_material(self.params, material, context=context),
        )
        self._keys[trader_id] = keys
        self.logger.info(
            "Issued trader keys", trader_id=trader_id, fingerprint=identity.fingerprint[:16]
        )
        return keys

    def revoke(self, trader_id: str) -> None:
        """Forget a trader whose handshake never completed"""
        if self._keys.pop(trader_id, None) is not None:
            self.logger.info("Revoked trader keys", trader_id=trader_id)

    def identities(self) -> List[TraderIdentity]:
        return [self._keys[t].identity for t in sorted(self._keys)]

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, trader_id: str) -> bool:
        return trader_id in self._keys
