"""Canonical RSA key records, arithmetic validation, and format parsing.

Internal storage keeps primes in the order the source produced them:
whether a library sorts p and q is one of the biases the rest of the
toolkit feeds on.
"""

import json
import logging
import math
import re
from dataclasses import dataclass

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import rsa

from ._ioutil import hex_to_int, int_to_hex
from .errors import EqualPrimes, NotInvertible, ParseError
from .primes import is_probable_prime

logger = logging.getLogger(__name__)

JSONL = "jsonl"
PEM_PKCS1 = "pem-pkcs1"
PEM_PKCS8 = "pem-pkcs8"
DER = "der"
FORMATS = (JSONL, PEM_PKCS1, PEM_PKCS8, DER)


@dataclass(frozen=True)
class KeyPair:
    """An RSA private key; d may be absent when only the factors are known."""

    p: int
    q: int
    n: int
    e: int
    d: int | None = None
    bits: int = 0

    def __post_init__(self):
        if self.bits == 0:
            object.__setattr__(self, "bits", self.n.bit_length())


@dataclass(frozen=True)
class PublicKey:
    """Public half only; enough for GCD work and scan ingestion."""

    n: int
    e: int
    bits: int = 0

    def __post_init__(self):
        if self.bits == 0:
            object.__setattr__(self, "bits", self.n.bit_length())


@dataclass(frozen=True)
class KeyRecord:
    """A key plus its provenance label."""

    key_id: str
    source_id: str
    key: KeyPair | PublicKey
    group_id: int | None = None

    @property
    def is_private(self) -> bool:
        return isinstance(self.key, KeyPair)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_keypair(k: KeyPair) -> ValidationReport:
    """Check the arithmetic invariants; returns a report, never raises."""
    violations = []
    if k.n != k.p * k.q:
        violations.append("n != p*q")
    if not is_probable_prime(k.p):
        violations.append("p not prime")
    if not is_probable_prime(k.q):
        violations.append("q not prime")
    if k.n.bit_length() != k.bits:
        violations.append("bit_length(n) != bits")
    if k.d is not None:
        lam = math.lcm(k.p - 1, k.q - 1)
        if (k.e * k.d) % lam != 1:
            violations.append("e*d != 1 mod lcm(p-1, q-1)")
    return ValidationReport(tuple(violations))


def complete_keypair(p: int, q: int, e: int) -> KeyPair:
    """Build a full key from two primes and a public exponent.

    d is the inverse of e modulo the Carmichael value lcm(p-1, q-1), the
    choice modern libraries make.
    """
    if p == q:
        raise EqualPrimes(f"p == q == {p}")
    lam = math.lcm(p - 1, q - 1)
    try:
        d = pow(e, -1, lam)
    except ValueError:
        raise NotInvertible(f"gcd(e={e}, lcm(p-1, q-1)) != 1") from None
    return KeyPair(p=p, q=q, n=p * q, e=e, d=d)


# --- JSONL ----------------------------------------------------------------

_HEX_FIELDS = ("p", "q", "n", "e", "d")


def _record_from_json_obj(obj: dict, offset: int, index: int) -> KeyRecord:
    try:
        nums = {f: hex_to_int(obj[f]) for f in _HEX_FIELDS if f in obj and obj[f] is not None}
    except (ValueError, TypeError) as ex:
        raise ParseError(offset, f"bad hex field: {ex}") from None
    if "e" not in nums:
        raise ParseError(offset, "missing field 'e'")
    bits = int(obj.get("bits", 0))
    if "p" in nums and "q" in nums:
        n = nums.get("n", nums["p"] * nums["q"])
        key = KeyPair(p=nums["p"], q=nums["q"], n=n, e=nums["e"], d=nums.get("d"), bits=bits)
    elif "n" in nums:
        key = PublicKey(n=nums["n"], e=nums["e"], bits=bits)
    else:
        raise ParseError(offset, "need either p and q or n")
    group = obj.get("group")
    return KeyRecord(
        key_id=str(obj.get("id", f"key{index}")),
        source_id=str(obj.get("source", "")),
        key=key,
        group_id=int(group) if group is not None else None,
    )


def _parse_jsonl(data: bytes, lenient: bool):
    offset = 0
    index = 0
    for raw in data.split(b"\n"):
        line = raw.strip()
        if line:
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as ex:
                    raise ParseError(offset, f"bad JSON: {ex.msg}") from None
                if not isinstance(obj, dict):
                    raise ParseError(offset, "line is not a JSON object")
                yield _record_from_json_obj(obj, offset, index)
            except ParseError as ex:
                if not lenient:
                    raise
                logger.warning("skipping malformed record: %s", ex)
            index += 1
        offset += len(raw) + 1


def record_to_json_obj(record: KeyRecord) -> dict:
    key = record.key
    obj = {"id": record.key_id, "source": record.source_id}
    if record.group_id is not None:
        obj["group"] = record.group_id
    obj["bits"] = key.bits
    if isinstance(key, KeyPair):
        obj["p"] = int_to_hex(key.p)
        obj["q"] = int_to_hex(key.q)
        obj["n"] = int_to_hex(key.n)
        obj["e"] = int_to_hex(key.e)
        if key.d is not None:
            obj["d"] = int_to_hex(key.d)
    else:
        obj["n"] = int_to_hex(key.n)
        obj["e"] = int_to_hex(key.e)
    return obj


# --- PEM / DER ------------------------------------------------------------

_PEM_BLOCK = re.compile(rb"-----BEGIN ([A-Z0-9 ]+)-----.*?-----END \1-----", re.DOTALL)
_PRIVATE_LABELS = (b"RSA PRIVATE KEY", b"PRIVATE KEY")
_PUBLIC_LABELS = (b"RSA PUBLIC KEY", b"PUBLIC KEY")


def _record_from_crypto_private(key_obj, offset: int, index: int) -> KeyRecord:
    if not isinstance(key_obj, rsa.RSAPrivateKey):
        raise ParseError(offset, "not an RSA private key")
    nums = key_obj.private_numbers()
    pub = nums.public_numbers
    pair = KeyPair(p=nums.p, q=nums.q, n=pub.n, e=pub.e, d=nums.d)
    return KeyRecord(key_id=f"key{index}", source_id="", key=pair)


def _record_from_crypto_public(key_obj, offset: int, index: int) -> KeyRecord:
    if not isinstance(key_obj, rsa.RSAPublicKey):
        raise ParseError(offset, "not an RSA public key")
    pub = key_obj.public_numbers()
    return KeyRecord(key_id=f"key{index}", source_id="", key=PublicKey(n=pub.n, e=pub.e))


def _load_pem_block(label: bytes, block: bytes, offset: int, index: int) -> KeyRecord:
    try:
        if label in _PRIVATE_LABELS:
            key_obj = serialization.load_pem_private_key(
                block, password=None, unsafe_skip_rsa_key_validation=True
            )
            return _record_from_crypto_private(key_obj, offset, index)
        if label in _PUBLIC_LABELS:
            return _record_from_crypto_public(
                serialization.load_pem_public_key(block), offset, index
            )
    except ParseError:
        raise
    except (ValueError, TypeError) as ex:
        raise ParseError(offset, f"undecodable PEM block: {ex}") from None
    raise ParseError(offset, f"unsupported PEM block type {label.decode()!r}")


def _parse_pem(data: bytes, lenient: bool):
    covered_begins = set()
    index = 0
    for match in _PEM_BLOCK.finditer(data):
        covered_begins.add(match.start())
        try:
            yield _load_pem_block(match.group(1), match.group(0), match.start(), index)
        except ParseError as ex:
            if not lenient:
                raise
            logger.warning("skipping malformed record: %s", ex)
        index += 1
    for stray in re.finditer(rb"-----BEGIN ", data):
        if stray.start() not in covered_begins:
            err = ParseError(stray.start(), "truncated or corrupt PEM block")
            if not lenient:
                raise err
            logger.warning("skipping malformed record: %s", err)


def _parse_der(data: bytes, lenient: bool):
    try:
        if not data:
            raise ParseError(0, "empty DER input")
        try:
            key_obj = serialization.load_der_private_key(
                data, password=None, unsafe_skip_rsa_key_validation=True
            )
            yield _record_from_crypto_private(key_obj, 0, 0)
            return
        except ValueError:
            pass
        try:
            yield _record_from_crypto_public(serialization.load_der_public_key(data), 0, 0)
            return
        except ValueError:
            pass
        raise ParseError(0, "not a DER-encoded RSA key")
    except ParseError as ex:
        if not lenient:
            raise
        logger.warning("skipping malformed record: %s", ex)


def parse_keys(data: bytes | str, fmt: str, lenient: bool = False):
    """Yield KeyRecords from a byte stream in the declared format.

    In lenient mode, records that fail to parse are skipped with a logged
    warning instead of aborting the stream.
    """
    if isinstance(data, str):
        data = data.encode()
    if fmt == JSONL:
        return _parse_jsonl(data, lenient)
    if fmt in (PEM_PKCS1, PEM_PKCS8):
        return _parse_pem(data, lenient)
    if fmt == DER:
        return _parse_der(data, lenient)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _crypto_private_key(key: KeyPair):
    d = key.d
    if d is None:
        d = complete_keypair(key.p, key.q, key.e).d
    pub = rsa.RSAPublicNumbers(key.e, key.n)
    nums = rsa.RSAPrivateNumbers(
        p=key.p,
        q=key.q,
        d=d,
        dmp1=d % (key.p - 1),
        dmq1=d % (key.q - 1),
        iqmp=pow(key.q, -1, key.p),
        public_numbers=pub,
    )
    return nums.private_key(unsafe_skip_rsa_key_validation=True)


def _serialize_pem_record(record: KeyRecord, private_format) -> bytes:
    if record.is_private:
        return _crypto_private_key(record.key).private_bytes(
            serialization.Encoding.PEM, private_format, serialization.NoEncryption()
        )
    pub = rsa.RSAPublicNumbers(record.key.e, record.key.n).public_key()
    return pub.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def serialize_keys(records, fmt: str) -> bytes:
    """Inverse of parse_keys for each supported format."""
    records = list(records)
    if fmt == JSONL:
        lines = [json.dumps(record_to_json_obj(r), separators=(",", ":")) for r in records]
        return ("\n".join(lines) + "\n").encode() if lines else b""
    if fmt in (PEM_PKCS1, PEM_PKCS8):
        private_format = (
            serialization.PrivateFormat.TraditionalOpenSSL
            if fmt == PEM_PKCS1
            else serialization.PrivateFormat.PKCS8
        )
        return b"".join(_serialize_pem_record(r, private_format) for r in records)
    if fmt == DER:
        if len(records) != 1:
            raise ValueError("DER output holds exactly one key per stream")
        record = records[0]
        if record.is_private:
            return _crypto_private_key(record.key).private_bytes(
                serialization.Encoding.DER,
                serialization.PrivateFormat.PKCS8,
                serialization.NoEncryption(),
            )
        pub = rsa.RSAPublicNumbers(record.key.e, record.key.n).public_key()
        return pub.public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_jsonl(path, records) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_keys(records, JSONL))


def read_jsonl(path, lenient: bool = False) -> list:
    with open(path, "rb") as fh:
        return list(parse_keys(fh.read(), JSONL, lenient=lenient))
