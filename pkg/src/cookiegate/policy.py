"""Cookie-policy decisions: four policies, two-click activation, frame heuristic.

Every decision is made from a request context (URL, frame position, top-level
site) and the current activation state. First-party requests pass unchanged
under every policy. Third-party handling depends on the selected policy:

* ``accept-all``      attach and accept cookies (browser default behaviour)
* ``block-third``     strip outgoing cookies, drop incoming ones
* ``visited``         attach only for third parties previously visited first party
* ``interaction``     attach only after the user activated that (third party,
                      site) pair; incoming cookies are quarantined until then

The interaction policy's click handling distinguishes social widgets from
advertisements by iframe nesting depth: a third-party frame directly under
the top-level document is a widget candidate (first click activates and
reloads it with cookies, the second click performs its native action), while
a deeper-nested third-party frame is treated as an advertisement and clicks
pass through untouched.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum

from .cookies import CookieJar, QuarantineKey, write_json_atomic
from .psl import (
    PartyClass,
    RegistrableDomain,
    SuffixRuleSet,
    classify,
    registrable_domain,
)
from urllib.parse import urlsplit


class PolicyKind(Enum):
    ACCEPT_ALL = "accept-all"
    BLOCK_THIRD_PARTY = "block-third"
    VISITED_BASED = "visited"
    INTERACTION_BASED = "interaction"

    @classmethod
    def from_name(cls, name: str) -> "PolicyKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(
            f"unknown policy {name!r}; expected one of "
            + ", ".join(k.value for k in cls)
        )


class CookieAction(Enum):
    ATTACH = "attach"
    STRIP = "strip"
    PASS_UNCHANGED = "pass"


class SetCookieAction(Enum):
    ACCEPT = "accept"
    QUARANTINE = "quarantine"
    DROP = "drop"


class FrameKind(Enum):
    WIDGET_CANDIDATE = "widget"
    ADVERTISEMENT_CANDIDATE = "advertisement"
    NON_INTERACTIVE = "non-interactive"


DOCUMENT = "document"
IFRAME = "iframe"
SUBRESOURCE = "subresource"
DESTINATIONS = (DOCUMENT, IFRAME, SUBRESOURCE)


@dataclass(frozen=True)
class FrameContext:
    """A frame's position in the page: identity, nesting depth, origin."""

    frame_id: str
    parent_frame_id: str | None
    depth: int
    frame_origin: str
    top_level_site: RegistrableDomain

    def __post_init__(self) -> None:
        if (self.depth == 0) != (self.parent_frame_id is None):
            raise ValueError("depth 0 exactly for the parentless top-level frame")
        if self.depth < 0:
            raise ValueError("negative frame depth")


@dataclass(frozen=True)
class RequestContext:
    method: str
    url: str
    destination: str
    frame: FrameContext
    site: RegistrableDomain
    interaction_initiated: bool = False

    def __post_init__(self) -> None:
        if self.destination not in DESTINATIONS:
            raise ValueError(f"unknown destination {self.destination!r}")
        if self.destination == DOCUMENT and self.frame.depth != 0:
            raise ValueError("document requests belong to the top-level frame")

    @property
    def host(self) -> str:
        return (urlsplit(self.url).hostname or "").lower()


@dataclass(frozen=True)
class RequestDecision:
    cookie_action: CookieAction
    set_cookie_action: SetCookieAction


@dataclass(frozen=True)
class ClickAction:
    kind: str  # "reload" | "pass"
    frame_id: str | None = None

    @classmethod
    def reload(cls, frame_id: str) -> "ClickAction":
        return cls(kind="reload", frame_id=frame_id)

    @classmethod
    def pass_through(cls) -> "ClickAction":
        return cls(kind="pass")


_PASS = RequestDecision(CookieAction.PASS_UNCHANGED, SetCookieAction.ACCEPT)
_ATTACH = RequestDecision(CookieAction.ATTACH, SetCookieAction.ACCEPT)
_BLOCK = RequestDecision(CookieAction.STRIP, SetCookieAction.DROP)
_QUARANTINE = RequestDecision(CookieAction.STRIP, SetCookieAction.QUARANTINE)


class ActivationTable:
    """Per-session activations, the persistent whitelist, and visited sites.

    Activated pairs last until the table is discarded (session end); the
    whitelist survives restarts via its JSON file.
    """

    def __init__(self) -> None:
        self.activated: set[tuple[str, str]] = set()
        self.whitelist: set[tuple[str, str]] = set()
        self.visited_first_party: set[str] = set()

    @staticmethod
    def _pair(third_party: RegistrableDomain, site: RegistrableDomain) -> tuple[str, str]:
        if third_party.value == site.value:
            raise ValueError("first party needs no activation")
        return (third_party.value, site.value)

    def activate(self, third_party: RegistrableDomain, site: RegistrableDomain) -> None:
        self.activated.add(self._pair(third_party, site))

    def is_consented(self, third_party: RegistrableDomain, site: RegistrableDomain) -> bool:
        pair = (third_party.value, site.value)
        return pair in self.activated or pair in self.whitelist

    def whitelist_add(self, third_party: RegistrableDomain, site: RegistrableDomain) -> None:
        self.whitelist.add(self._pair(third_party, site))

    def whitelist_remove(self, third_party: RegistrableDomain, site: RegistrableDomain) -> None:
        self.whitelist.discard((third_party.value, site.value))

    def record_first_party_visit(self, site: RegistrableDomain) -> None:
        self.visited_first_party.add(site.value)

    # -- whitelist persistence (JSON array of {thirdParty, site}) ---------

    def load_whitelist(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        for entry in entries:
            self.whitelist.add((entry["thirdParty"], entry["site"]))

    def save_whitelist(self, path: str) -> None:
        entries = [
            {"thirdParty": tp, "site": site} for tp, site in sorted(self.whitelist)
        ]
        write_json_atomic(path, entries)


def classify_frame(frame: FrameContext, rules: SuffixRuleSet) -> FrameKind:
    """Widget vs advertisement by nesting depth; first-party frames are inert.

    A third-party frame at depth 1 is a widget candidate; nested deeper it is
    an advertisement candidate (ad auctions chain iframes). Depth alone
    cannot tell a single-iframe advertisement from a widget; that known
    misclassification is surfaced in reports, not prevented here.
    """
    if frame.depth == 0:
        return FrameKind.NON_INTERACTIVE
    party = classify(frame.frame_origin, frame.top_level_site, rules)
    if party is PartyClass.FIRST_PARTY:
        return FrameKind.NON_INTERACTIVE
    if frame.depth == 1:
        return FrameKind.WIDGET_CANDIDATE
    return FrameKind.ADVERTISEMENT_CANDIDATE


def decide_request(
    ctx: RequestContext,
    state: ActivationTable,
    policy: PolicyKind,
    rules: SuffixRuleSet,
    *,
    drop_new_third_party_cookies: bool = False,
) -> RequestDecision:
    """The cookie decision for one request under one policy.

    First-party requests pass unchanged regardless of policy. The optional
    drop flag turns quarantining of new third-party cookies into outright
    refusal (off by default).
    """
    party = classify(ctx.host, ctx.site, rules)
    if party is PartyClass.FIRST_PARTY:
        return _PASS
    if policy is PolicyKind.ACCEPT_ALL:
        return _ATTACH
    if policy is PolicyKind.BLOCK_THIRD_PARTY:
        return _BLOCK
    third_party = registrable_domain(ctx.host, rules)
    if policy is PolicyKind.VISITED_BASED:
        if third_party.value in state.visited_first_party:
            return _ATTACH
        return _BLOCK
    # interaction-based
    if ctx.interaction_initiated or state.is_consented(third_party, ctx.site):
        return _ATTACH
    return _BLOCK if drop_new_third_party_cookies else _QUARANTINE


def on_click(
    frame: FrameContext, state: ActivationTable, rules: SuffixRuleSet
) -> ClickAction:
    """Two-click control: the first click on a blocked widget activates and
    reloads it; everything else passes through.

    Advertisement candidates never reload (reloading would trigger new
    auctions and double-charge impressions); their clicks pass unchanged.
    """
    if classify_frame(frame, rules) is not FrameKind.WIDGET_CANDIDATE:
        return ClickAction.pass_through()
    third_party = registrable_domain(frame.frame_origin, rules)
    if state.is_consented(third_party, frame.top_level_site):
        return ClickAction.pass_through()
    state.activate(third_party, frame.top_level_site)
    return ClickAction.reload(frame.frame_id)


@dataclass
class PolicyEngine:
    """Policy, activation state, and jar wired together.

    ``decide`` is pure given a state snapshot; mutations (clicks,
    activations, whitelist edits) are serialized by the owner (the proxy
    core holds one lock, replay is single-threaded). Decision wall times are
    collected for latency reporting.
    """

    policy: PolicyKind
    rules: SuffixRuleSet
    jar: CookieJar
    table: ActivationTable = field(default_factory=ActivationTable)
    drop_new_third_party_cookies: bool = False
    whitelist_path: str | None = None
    latency_ns: list[int] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        policy: PolicyKind,
        rules: SuffixRuleSet,
        *,
        jar: CookieJar | None = None,
        drop_new_third_party_cookies: bool = False,
        whitelist_path: str | None = None,
    ) -> "PolicyEngine":
        engine = cls(
            policy=policy,
            rules=rules,
            jar=jar if jar is not None else CookieJar(rules),
            drop_new_third_party_cookies=drop_new_third_party_cookies,
            whitelist_path=whitelist_path,
        )
        if whitelist_path and os.path.exists(whitelist_path):
            engine.table.load_whitelist(whitelist_path)
        return engine

    def decide(self, ctx: RequestContext) -> RequestDecision:
        start = time.perf_counter_ns()
        decision = decide_request(
            ctx,
            self.table,
            self.policy,
            self.rules,
            drop_new_third_party_cookies=self.drop_new_third_party_cookies,
        )
        self.latency_ns.append(time.perf_counter_ns() - start)
        return decision

    def click(self, frame: FrameContext) -> ClickAction:
        return on_click(frame, self.table, self.rules)

    def activate(self, third_party: RegistrableDomain, site: RegistrableDomain) -> int:
        """Activate a pair and release its quarantined cookies."""
        self.table.activate(third_party, site)
        return self.release_for(third_party, site)

    def release_for(self, third_party: RegistrableDomain, site: RegistrableDomain) -> int:
        return self.jar.release_quarantine((third_party.value, site.value))

    def whitelist_add(self, third_party: RegistrableDomain, site: RegistrableDomain) -> None:
        self.table.whitelist_add(third_party, site)
        self._persist_whitelist()

    def whitelist_remove(self, third_party: RegistrableDomain, site: RegistrableDomain) -> None:
        self.table.whitelist_remove(third_party, site)
        self._persist_whitelist()

    def record_visit(self, site: RegistrableDomain) -> None:
        self.table.record_first_party_visit(site)

    def _persist_whitelist(self) -> None:
        if self.whitelist_path:
            self.table.save_whitelist(self.whitelist_path)
