"""RFC 6265-style cookie storage with a quarantine for third-party cookies.

The jar keeps two stores: ``active`` cookies, which are eligible for request
attachment, and ``quarantine``, which holds cookies set by third parties
until the user activates that (third party, site) pair. Quarantined cookies
never contribute to outgoing requests; stripping a request never removes
anything from the jar.

HttpOnly is parsed but ignored (there is no script layer at a proxy) and
SameSite is parsed but not enforced; the policy engine is strictly stronger
for third parties.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, replace
from email.utils import parsedate_to_datetime
from urllib.parse import urlsplit

from .psl import RegistrableDomain, SuffixRuleSet, registrable_domain

_NAME_FORBIDDEN = set(' \t;,="')


class CookieParseError(ValueError):
    """A Set-Cookie header that cannot be parsed into a cookie."""


@dataclass(frozen=True)
class Cookie:
    name: str
    value: str
    domain: str
    host_only: bool
    path: str
    expires: float | None  # absolute time; None = session cookie
    secure: bool
    created_at: float
    http_only: bool = False
    same_site: str | None = None

    def is_expired(self, now: float) -> bool:
        return self.expires is not None and self.expires < now

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.domain, self.path, self.name)

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "domain": self.domain,
            "host_only": self.host_only,
            "path": self.path,
            "expires": self.expires,
            "secure": self.secure,
            "created_at": self.created_at,
            "http_only": self.http_only,
            "same_site": self.same_site,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Cookie":
        return cls(
            name=record["name"],
            value=record["value"],
            domain=record["domain"],
            host_only=bool(record.get("host_only", True)),
            path=record.get("path", "/"),
            expires=record.get("expires"),
            secure=bool(record.get("secure", False)),
            created_at=float(record.get("created_at", 0.0)),
            http_only=bool(record.get("http_only", False)),
            same_site=record.get("same_site"),
        )


@dataclass(frozen=True)
class QuarantineKey:
    """The (third party, top-level site) pair a withheld cookie belongs to."""

    third_party: RegistrableDomain
    site: RegistrableDomain

    def __post_init__(self) -> None:
        if self.third_party.value == self.site.value:
            raise ValueError("quarantine key requires third_party != site")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.third_party.value, self.site.value)


@dataclass(frozen=True)
class PlacementReport:
    """Where a stored cookie ended up."""

    location: str  # active | quarantine | dropped | rejected
    reason: str | None = None
    quarantine_key: QuarantineKey | None = None


def domain_match(host: str, domain: str) -> bool:
    """RFC 6265 domain matching; the host must be a DNS name for suffixes."""
    if host == domain:
        return True
    return host.endswith("." + domain)


def default_path(url_path: str) -> str:
    if not url_path or not url_path.startswith("/") or url_path == "/":
        return "/"
    cut = url_path.rfind("/")
    return url_path[:cut] if cut > 0 else "/"


def path_match(request_path: str, cookie_path: str) -> bool:
    if request_path == cookie_path:
        return True
    if request_path.startswith(cookie_path):
        if cookie_path.endswith("/"):
            return True
        if request_path[len(cookie_path):][:1] == "/":
            return True
    return False


def _parse_expires(value: str) -> float | None:
    try:
        return parsedate_to_datetime(value).timestamp()
    except (ValueError, TypeError):
        return None


def parse_set_cookie(header: str, request_url: str, now: float) -> Cookie:
    """Parse one Set-Cookie header received for ``request_url`` at ``now``.

    Max-Age takes precedence over Expires; an unparseable attribute is
    ignored. Raises :class:`CookieParseError` only for a syntactically
    invalid name/value pair.
    """
    parts = header.split(";")
    first = parts[0]
    if "=" not in first:
        raise CookieParseError(f"missing '=' in {header!r}")
    name, _, value = first.partition("=")
    name = name.strip()
    value = value.strip()
    if not name or any(ch in _NAME_FORBIDDEN or ord(ch) < 0x21 for ch in name):
        raise CookieParseError(f"invalid cookie name in {header!r}")
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        value = value[1:-1]

    split = urlsplit(request_url)
    request_host = (split.hostname or "").lower()
    if not request_host:
        raise CookieParseError(f"request URL {request_url!r} has no host")

    domain: str | None = None
    path: str | None = None
    expires: float | None = None
    max_age: int | None = None
    secure = False
    http_only = False
    same_site: str | None = None

    for part in parts[1:]:
        attr, _, attr_value = part.partition("=")
        attr = attr.strip().lower()
        attr_value = attr_value.strip()
        if attr == "domain" and attr_value:
            domain = attr_value.lstrip(".").lower().rstrip(".")
        elif attr == "path":
            path = attr_value if attr_value.startswith("/") else None
        elif attr == "expires":
            parsed = _parse_expires(attr_value)
            if parsed is not None:
                expires = parsed
        elif attr == "max-age":
            if attr_value and (attr_value[0].isdigit() or attr_value[0] == "-"):
                try:
                    max_age = int(attr_value)
                except ValueError:
                    pass
        elif attr == "secure":
            secure = True
        elif attr == "httponly":
            http_only = True
        elif attr == "samesite":
            same_site = attr_value.lower() or None

    if max_age is not None:
        expires = now + max_age if max_age > 0 else now - 1

    return Cookie(
        name=name,
        value=value,
        domain=domain if domain else request_host,
        host_only=domain is None,
        path=path if path is not None else default_path(split.path),
        expires=expires,
        secure=secure,
        created_at=now,
        http_only=http_only,
        same_site=same_site,
    )


class CookieJar:
    """Cookie store with an activation-gated quarantine.

    Single logical owner: callers serialize mutations (the proxy core holds
    a lock around them); reads between mutations are safe.
    """

    def __init__(self, rules: SuffixRuleSet):
        self._rules = rules
        self._active: dict[tuple[str, str, str], Cookie] = {}
        self._quarantine: dict[tuple[str, str], dict[tuple[str, str, str], Cookie]] = {}

    # -- storing ---------------------------------------------------------

    def store(
        self,
        cookie: Cookie,
        *,
        source_host: str,
        site: RegistrableDomain,
        directive: str,
    ) -> PlacementReport:
        """Place a parsed cookie per the policy directive.

        ``accept`` upserts into the active store, ``quarantine`` withholds it
        under (cookie domain's registrable domain, site), ``drop`` discards
        it. A Domain attribute that does not domain-match the response host,
        or that names a bare public suffix, is rejected.
        """
        host = source_host.lower().rstrip(".")
        if not cookie.host_only:
            cookie_site = registrable_domain(cookie.domain, self._rules)
            if cookie_site.host_literal:
                if cookie.domain != host:
                    return PlacementReport("rejected", reason="public suffix domain")
                cookie = replace(cookie, host_only=True)
            elif not domain_match(host, cookie.domain):
                return PlacementReport("rejected", reason="domain mismatch")

        if directive == "drop":
            return PlacementReport("dropped")
        if directive == "accept":
            self._upsert(self._active, cookie)
            return PlacementReport("active")
        if directive == "quarantine":
            key = QuarantineKey(
                third_party=registrable_domain(cookie.domain, self._rules), site=site
            )
            self._upsert(self._quarantine.setdefault(key.pair, {}), cookie)
            return PlacementReport("quarantine", quarantine_key=key)
        raise ValueError(f"unknown directive {directive!r}")

    @staticmethod
    def _upsert(store: dict[tuple[str, str, str], Cookie], cookie: Cookie) -> None:
        # Same-key replacement keeps the original creation time.
        old = store.get(cookie.key)
        if old is not None:
            cookie = replace(cookie, created_at=old.created_at)
        store[cookie.key] = cookie

    # -- matching --------------------------------------------------------

    def cookies_for(self, url: str, now: float) -> str | None:
        """Serialized Cookie header for a request, or None when nothing matches.

        Active, unexpired cookies that domain-, path-, and scheme-match the
        URL, ordered by longer path first, then older creation time, then
        name (a total order for reproducibility). Quarantined cookies never
        appear.
        """
        split = urlsplit(url)
        if split.scheme not in ("http", "https"):
            raise ValueError(f"unsupported scheme in {url!r}")
        host = (split.hostname or "").lower()
        path = split.path or "/"
        matched = [
            c
            for c in self._active.values()
            if not c.is_expired(now)
            and (host == c.domain if c.host_only else domain_match(host, c.domain))
            and path_match(path, c.path)
            and (not c.secure or split.scheme == "https")
        ]
        if not matched:
            return None
        matched.sort(key=lambda c: (-len(c.path), c.created_at, c.name))
        return "; ".join(f"{c.name}={c.value}" for c in matched)

    # -- quarantine ------------------------------------------------------

    def release_quarantine(self, key: QuarantineKey | tuple[str, str]) -> int:
        """Move every cookie under the key into the active store."""
        pair = key.pair if isinstance(key, QuarantineKey) else key
        held = self._quarantine.pop(pair, None)
        if not held:
            return 0
        for cookie in held.values():
            self._upsert(self._active, cookie)
        return len(held)

    def quarantined(self, key: QuarantineKey | tuple[str, str]) -> list[Cookie]:
        pair = key.pair if isinstance(key, QuarantineKey) else key
        return list(self._quarantine.get(pair, {}).values())

    def quarantine_pairs(self) -> list[tuple[str, str]]:
        return sorted(self._quarantine)

    # -- maintenance -----------------------------------------------------

    def purge_expired(self, now: float) -> int:
        removed = 0
        for key in [k for k, c in self._active.items() if c.is_expired(now)]:
            del self._active[key]
            removed += 1
        for pair in list(self._quarantine):
            held = self._quarantine[pair]
            for key in [k for k, c in held.items() if c.is_expired(now)]:
                del held[key]
                removed += 1
            if not held:
                del self._quarantine[pair]
        return removed

    def active_cookies(self) -> list[Cookie]:
        return sorted(self._active.values(), key=lambda c: c.key)

    def has_active_for_domain(self, domain: str, now: float) -> bool:
        return any(
            not c.is_expired(now)
            and (domain == c.domain or domain_match(c.domain, domain))
            for c in self._active.values()
        )

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "active": [c.to_record() for c in self.active_cookies()],
            "quarantine": [
                {
                    "third_party": pair[0],
                    "site": pair[1],
                    "cookies": [
                        c.to_record()
                        for c in sorted(held.values(), key=lambda c: c.key)
                    ],
                }
                for pair, held in sorted(self._quarantine.items())
            ],
        }

    def load_dict(self, data: dict) -> None:
        for record in data.get("active", []):
            cookie = Cookie.from_record(record)
            self._active[cookie.key] = cookie
        for entry in data.get("quarantine", []):
            pair = (entry["third_party"], entry["site"])
            held = self._quarantine.setdefault(pair, {})
            for record in entry.get("cookies", []):
                cookie = Cookie.from_record(record)
                held[cookie.key] = cookie

    def save_file(self, path: str) -> None:
        write_json_atomic(path, self.to_dict())

    def load_file(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            self.load_dict(json.load(fh))


def write_json_atomic(path: str, data) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
