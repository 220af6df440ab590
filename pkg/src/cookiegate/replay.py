"""Deterministic replay of recorded sessions under each cookie policy.

A session trace is a JSON document of ordered page loads (each with its
frame tree and request list) interleaved with click events by sequence
number. Replaying a trace under a policy yields an exposure report; traces
are replayed with a logical clock (one tick per dispatched request), so two
runs of the same trace produce identical reports.

Clicks are interpreted by the interaction policy's two-click machinery
(activate + reload with cookies). Under the other policies a click passes
through with no mechanical effect, but a click on a widget-candidate frame
still counts as user consent for exposure accounting under every policy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from urllib.parse import urlsplit

from .cookies import CookieJar, CookieParseError, parse_set_cookie
from .exposure import ExposureRecorder, ExposureReport
from .policy import (
    DESTINATIONS,
    DOCUMENT,
    IFRAME,
    FrameContext,
    FrameKind,
    PolicyEngine,
    PolicyKind,
    RequestContext,
    classify_frame,
)
from .psl import PartyClass, SuffixRuleSet, bundled_rules, classify, registrable_domain

# Path tokens that flag a depth-1 third-party frame as a possible
# single-iframe advertisement (reporting aid only; never affects decisions).
AD_PATH_TOKENS = ("/ads/", "bid", "doubleclick")


class TraceParseError(ValueError):
    """A trace file violates the schema; the message names the violation."""


@dataclass(frozen=True)
class TraceFrame:
    frame_id: str
    parent_frame_id: str | None
    url: str
    depth: int


@dataclass(frozen=True)
class TraceRequest:
    url: str
    frame_id: str
    destination: str
    set_cookies: tuple[str, ...] = ()


@dataclass(frozen=True)
class TracePage:
    seq: int
    top_level_url: str
    frames: dict[str, TraceFrame]
    requests: tuple[TraceRequest, ...]


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    frame_id: str


@dataclass(frozen=True)
class SessionTrace:
    pages: tuple[TracePage, ...]
    events: tuple[TraceEvent, ...]

    def without_events(self) -> "SessionTrace":
        return SessionTrace(pages=self.pages, events=())

    def request_count(self) -> int:
        return sum(len(p.requests) for p in self.pages)


def _url_host(url: str, what: str) -> str:
    split = urlsplit(url)
    if split.scheme not in ("http", "https") or not split.hostname:
        raise TraceParseError(f"{what}: bad URL {url!r}")
    return split.hostname.lower()


def parse_trace(text: str) -> SessionTrace:
    """Parse and validate trace JSON; the error names the first violation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("pages"), list):
        raise TraceParseError("trace must be an object with a 'pages' list")

    pages: list[TracePage] = []
    last_seq: int | None = None
    for index, raw_page in enumerate(data["pages"]):
        where = f"pages[{index}]"
        if not isinstance(raw_page, dict):
            raise TraceParseError(f"{where}: not an object")
        seq = raw_page.get("seq")
        if not isinstance(seq, int):
            raise TraceParseError(f"{where}: missing integer 'seq'")
        if last_seq is not None and seq <= last_seq:
            raise TraceParseError(f"{where}: seq {seq} not strictly increasing")
        last_seq = seq
        top_level_url = raw_page.get("top_level_url")
        if not isinstance(top_level_url, str):
            raise TraceParseError(f"{where}: missing 'top_level_url'")
        _url_host(top_level_url, where)

        frames: dict[str, TraceFrame] = {}
        for fi, raw_frame in enumerate(raw_page.get("frames", [])):
            fwhere = f"{where}.frames[{fi}]"
            frame_id = raw_frame.get("frame_id")
            if not isinstance(frame_id, str) or not frame_id:
                raise TraceParseError(f"{fwhere}: missing 'frame_id'")
            if frame_id in frames:
                raise TraceParseError(f"{fwhere}: duplicate frame_id {frame_id!r}")
            parent = raw_frame.get("parent_frame_id")
            depth = raw_frame.get("depth")
            if not isinstance(depth, int) or depth < 0:
                raise TraceParseError(f"{fwhere}: missing nonnegative 'depth'")
            if (depth == 0) != (parent is None):
                raise TraceParseError(
                    f"{fwhere}: depth {depth} inconsistent with parent link"
                )
            if parent is not None:
                if parent not in frames:
                    raise TraceParseError(f"{fwhere}: dangling parent {parent!r}")
                if frames[parent].depth + 1 != depth:
                    raise TraceParseError(
                        f"{fwhere}: depth {depth} != parent depth + 1"
                    )
            url = raw_frame.get("url")
            if not isinstance(url, str):
                raise TraceParseError(f"{fwhere}: missing 'url'")
            _url_host(url, fwhere)
            frames[frame_id] = TraceFrame(frame_id, parent, url, depth)

        requests: list[TraceRequest] = []
        for ri, raw_request in enumerate(raw_page.get("requests", [])):
            rwhere = f"{where}.requests[{ri}]"
            url = raw_request.get("url")
            if not isinstance(url, str):
                raise TraceParseError(f"{rwhere}: missing 'url'")
            _url_host(url, rwhere)
            frame_id = raw_request.get("frame_id")
            if frame_id not in frames:
                raise TraceParseError(f"{rwhere}: dangling frame_id {frame_id!r}")
            destination = raw_request.get("destination")
            if destination not in DESTINATIONS:
                raise TraceParseError(f"{rwhere}: bad destination {destination!r}")
            if destination == DOCUMENT and frames[frame_id].depth != 0:
                raise TraceParseError(
                    f"{rwhere}: document request in a nested frame"
                )
            set_cookies = raw_request.get("set_cookies", [])
            if not isinstance(set_cookies, list) or not all(
                isinstance(s, str) for s in set_cookies
            ):
                raise TraceParseError(f"{rwhere}: 'set_cookies' must be strings")
            requests.append(
                TraceRequest(url, frame_id, destination, tuple(set_cookies))
            )

        pages.append(TracePage(seq, top_level_url, frames, tuple(requests)))

    events: list[TraceEvent] = []
    page_seqs = [p.seq for p in pages]
    last_event_seq: int | None = None
    for ei, raw_event in enumerate(data.get("events", [])):
        ewhere = f"events[{ei}]"
        seq = raw_event.get("seq")
        if not isinstance(seq, int):
            raise TraceParseError(f"{ewhere}: missing integer 'seq'")
        if last_event_seq is not None and seq <= last_event_seq:
            raise TraceParseError(f"{ewhere}: seq {seq} not strictly increasing")
        last_event_seq = seq
        if seq in page_seqs:
            raise TraceParseError(f"{ewhere}: seq {seq} collides with a page load")
        kind = raw_event.get("kind")
        if kind != "click":
            raise TraceParseError(f"{ewhere}: unknown event kind {kind!r}")
        owner = _owning_page(pages, seq)
        if owner is None:
            raise TraceParseError(f"{ewhere}: no page loaded before seq {seq}")
        frame_id = raw_event.get("frame_id")
        if frame_id not in owner.frames:
            raise TraceParseError(f"{ewhere}: unknown frame {frame_id!r}")
        events.append(TraceEvent(seq, kind, frame_id))

    return SessionTrace(pages=tuple(pages), events=tuple(events))


def _owning_page(pages: list[TracePage], seq: int) -> TracePage | None:
    owner = None
    for page in pages:
        if page.seq < seq:
            owner = page
        else:
            break
    return owner


def load_trace(path: str) -> SessionTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


@dataclass(frozen=True)
class ClickRecord:
    seq: int
    frame_id: str
    action: str  # "reload" | "pass"
    reload_url: str | None = None


class ReplaySession:
    """One deterministic run of a trace under one policy.

    Exposes the final jar, activation table, and click log for inspection;
    ``run()`` returns the exposure report.
    """

    def __init__(
        self,
        trace: SessionTrace,
        policy: PolicyKind,
        rules: SuffixRuleSet | None = None,
        *,
        initial_jar: CookieJar | None = None,
        drop_new_third_party_cookies: bool = False,
    ):
        self.trace = trace
        self.policy = policy
        self.rules = rules if rules is not None else bundled_rules()
        jar = initial_jar if initial_jar is not None else CookieJar(self.rules)
        self.engine = PolicyEngine.create(
            policy,
            self.rules,
            jar=jar,
            drop_new_third_party_cookies=drop_new_third_party_cookies,
        )
        self.click_log: list[ClickRecord] = []
        self.report: ExposureReport | None = None
        self._recorder = ExposureRecorder()
        self._consented: set[tuple[str, str]] = set(self.engine.table.whitelist)
        self._clock = 0

    @property
    def jar(self) -> CookieJar:
        return self.engine.jar

    def run(self) -> ExposureReport:
        timeline = sorted(
            [("page", page.seq, page) for page in self.trace.pages]
            + [("event", event.seq, event) for event in self.trace.events],
            key=lambda item: item[1],
        )
        current_page: TracePage | None = None
        frame_contexts: dict[str, FrameContext] = {}
        for kind, _seq, item in timeline:
            if kind == "page":
                current_page = item
                frame_contexts = self._load_page(item)
            else:
                self._handle_click(item, current_page, frame_contexts)
        self.report = self._recorder.build(
            self.policy,
            ad_risk_count=count_single_iframe_ad_risk(self.trace, self.rules),
            latency_ns=self.engine.latency_ns,
        )
        return self.report

    # -- internals ---------------------------------------------------------

    def _load_page(self, page: TracePage) -> dict[str, FrameContext]:
        site = registrable_domain(_url_host(page.top_level_url, "page"), self.rules)
        self.engine.record_visit(site)
        contexts = {
            f.frame_id: FrameContext(
                frame_id=f.frame_id,
                parent_frame_id=f.parent_frame_id,
                depth=f.depth,
                frame_origin=_url_host(f.url, "frame"),
                top_level_site=site,
            )
            for f in page.frames.values()
        }
        for request in page.requests:
            ctx = RequestContext(
                method="GET",
                url=request.url,
                destination=request.destination,
                frame=contexts[request.frame_id],
                site=site,
            )
            self._dispatch(ctx, request.set_cookies)
        return contexts

    def _dispatch(self, ctx: RequestContext, set_cookies: tuple[str, ...]) -> None:
        self._clock += 1
        now = float(self._clock)
        decision = self.engine.decide(ctx)
        party = classify(ctx.host, ctx.site, self.rules)
        attaches = decision.cookie_action.value in ("attach", "pass")
        cookie_header = self.jar.cookies_for(ctx.url, now) if attaches else None
        pair = None
        consented = False
        if party is PartyClass.THIRD_PARTY:
            third_party = registrable_domain(ctx.host, self.rules)
            pair = (third_party.value, ctx.site.value)
            consented = pair in self._consented
        self._recorder.record(
            url=ctx.url,
            party=party,
            decision=decision,
            cookie_header=cookie_header,
            pair=pair,
            consented=consented,
        )
        directive = decision.set_cookie_action.value
        for raw in set_cookies:
            try:
                cookie = parse_set_cookie(raw, ctx.url, now)
            except CookieParseError:
                continue
            self.jar.store(
                cookie, source_host=ctx.host, site=ctx.site, directive=directive
            )

    def _handle_click(
        self,
        event: TraceEvent,
        page: TracePage | None,
        contexts: dict[str, FrameContext],
    ) -> None:
        frame_ctx = contexts[event.frame_id]
        # A click on a widget-candidate frame counts as consent for exposure
        # accounting under every policy; only the interaction policy also
        # activates and reloads.
        if classify_frame(frame_ctx, self.rules) is FrameKind.WIDGET_CANDIDATE:
            third_party = registrable_domain(frame_ctx.frame_origin, self.rules)
            self._consented.add((third_party.value, frame_ctx.top_level_site.value))
        if self.policy is not PolicyKind.INTERACTION_BASED:
            self.click_log.append(ClickRecord(event.seq, event.frame_id, "pass"))
            return
        action = self.engine.click(frame_ctx)
        if action.kind != "reload":
            self.click_log.append(ClickRecord(event.seq, event.frame_id, "pass"))
            return
        frame = page.frames[event.frame_id]
        self.click_log.append(
            ClickRecord(event.seq, event.frame_id, "reload", frame.url)
        )
        third_party = registrable_domain(frame_ctx.frame_origin, self.rules)
        self.engine.release_for(third_party, frame_ctx.top_level_site)
        reload_ctx = RequestContext(
            method="GET",
            url=frame.url,
            destination=IFRAME,
            frame=frame_ctx,
            site=frame_ctx.top_level_site,
            interaction_initiated=True,
        )
        # The reload reissues the frame's document request; its live response
        # is not part of the trace, so no Set-Cookie processing happens here.
        self._dispatch(reload_ctx, ())


def count_single_iframe_ad_risk(trace: SessionTrace, rules: SuffixRuleSet) -> int:
    """Depth-1 third-party frames whose URL path smells like an ad slot.

    These are the frames the nesting heuristic cannot tell from widgets;
    counted for reporting only.
    """
    count = 0
    for page in trace.pages:
        site = registrable_domain(_url_host(page.top_level_url, "page"), rules)
        for frame in page.frames.values():
            if frame.depth != 1:
                continue
            host = _url_host(frame.url, "frame")
            if classify(host, site, rules) is not PartyClass.THIRD_PARTY:
                continue
            path = urlsplit(frame.url).path.lower()
            if any(token in path for token in AD_PATH_TOKENS):
                count += 1
    return count


def simulate(
    trace: SessionTrace,
    policy: PolicyKind,
    rules: SuffixRuleSet | None = None,
    **kwargs,
) -> ExposureReport:
    """Replay a trace under one policy and return its exposure report."""
    return ReplaySession(trace, policy, rules, **kwargs).run()


@dataclass
class ComparisonResult:
    reports: list[ExposureReport]
    dominance: dict[str, bool]

    def to_dict(self, *, include_latency: bool = False) -> dict:
        return {
            "policies": [r.to_dict(include_latency=include_latency) for r in self.reports],
            "dominance": self.dominance,
        }

    def to_json(self, *, include_latency: bool = False) -> str:
        return json.dumps(
            self.to_dict(include_latency=include_latency), indent=2, sort_keys=True
        ) + "\n"

    def to_csv(self, *, include_latency: bool = False) -> str:
        buffer = io.StringIO()
        columns = [
            "policy",
            "cookie_bearing_pairs",
            "non_consented_pairs",
            "requests",
            "single_iframe_ad_risk_count",
        ]
        if include_latency:
            columns += ["median_us", "p99_us"]
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for report in self.reports:
            row = [
                report.policy.value,
                ";".join("@".join(p) for p in report.cookie_bearing_pairs),
                ";".join("@".join(p) for p in report.non_consented_pairs),
                len(report.per_request_log),
                report.single_iframe_ad_risk_count,
            ]
            if include_latency:
                stats = report.decision_latency
                row += [stats.median_us, stats.p99_us] if stats else ["", ""]
            writer.writerow(row)
        return buffer.getvalue()


def compare(
    trace: SessionTrace,
    policies: list[PolicyKind],
    rules: SuffixRuleSet | None = None,
) -> ComparisonResult:
    """Replay under several policies and check the dominance relations."""
    if not policies:
        raise ValueError("at least one policy required")
    rules = rules if rules is not None else bundled_rules()
    reports = {policy: simulate(trace, policy, rules) for policy in policies}
    dominance: dict[str, bool] = {}
    if PolicyKind.BLOCK_THIRD_PARTY in reports:
        dominance["block_third_party_empty"] = (
            reports[PolicyKind.BLOCK_THIRD_PARTY].cookie_bearing_pairs == []
        )
    if PolicyKind.INTERACTION_BASED in reports:
        dominance["interaction_non_consented_empty"] = (
            reports[PolicyKind.INTERACTION_BASED].non_consented_pairs == []
        )
        no_clicks = simulate(trace.without_events(), PolicyKind.INTERACTION_BASED, rules)
        dominance["interaction_empty_without_clicks"] = (
            no_clicks.cookie_bearing_pairs == []
        )
    if PolicyKind.VISITED_BASED in reports and PolicyKind.ACCEPT_ALL in reports:
        dominance["visited_subset_of_accept_all"] = set(
            reports[PolicyKind.VISITED_BASED].cookie_bearing_pairs
        ) <= set(reports[PolicyKind.ACCEPT_ALL].cookie_bearing_pairs)
    return ComparisonResult(
        reports=[reports[policy] for policy in policies], dominance=dominance
    )
