"""Naive reference simulation used for differential testing of the replayer.

Re-derives every decision from first principles with plain lists and
explicit loops: policy outcomes, widget-vs-ad frame classification, cookie
storage, matching, ordering, quarantine, and exposure accounting are all
reimplemented here without touching the policy engine or the jar. Only the
registrable-domain lookup and the syntactic Set-Cookie parse are reused, so
that both sides agree on what a host or header *is* while disagreeing freely
about what to *do* with it.

Not used by any production path; production code must never import this.
"""

from __future__ import annotations

from urllib.parse import urlsplit

from .cookies import CookieParseError, parse_set_cookie
from .exposure import ExposureReport, RequestLogEntry
from .policy import PolicyKind
from .psl import SuffixRuleSet, bundled_rules, registrable_domain
from .replay import AD_PATH_TOKENS, SessionTrace


def _host(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


def oracle_simulate(
    trace: SessionTrace, policy: PolicyKind, rules: SuffixRuleSet | None = None
) -> ExposureReport:
    rules = rules if rules is not None else bundled_rules()

    active: list[dict] = []
    quarantine: dict[tuple[str, str], list[dict]] = {}
    activated: set[tuple[str, str]] = set()
    visited: set[str] = set()
    consented: set[tuple[str, str]] = set()
    bearing: set[tuple[str, str]] = set()
    non_consented: set[tuple[str, str]] = set()
    log: list[RequestLogEntry] = []
    clock = 0

    def upsert(bucket: list[dict], record: dict) -> None:
        for i, old in enumerate(bucket):
            if (old["domain"], old["path"], old["name"]) == (
                record["domain"], record["path"], record["name"]
            ):
                kept = dict(record)
                kept["created_at"] = old["created_at"]
                bucket[i] = kept
                return
        bucket.append(dict(record))

    def header_for(url: str, now: float) -> str | None:
        split = urlsplit(url)
        host = (split.hostname or "").lower()
        path = split.path or "/"
        picked = []
        for rec in active:
            if rec["expires"] is not None and rec["expires"] < now:
                continue
            if rec["host_only"]:
                if host != rec["domain"]:
                    continue
            elif not (host == rec["domain"] or host.endswith("." + rec["domain"])):
                continue
            cpath = rec["path"]
            if not (
                path == cpath
                or (
                    path.startswith(cpath)
                    and (cpath.endswith("/") or path[len(cpath):len(cpath) + 1] == "/")
                )
            ):
                continue
            if rec["secure"] and split.scheme != "https":
                continue
            picked.append(rec)
        if not picked:
            return None
        picked.sort(key=lambda r: (-len(r["path"]), r["created_at"], r["name"]))
        return "; ".join(f"{r['name']}={r['value']}" for r in picked)

    def handle_request(
        url: str, site, interaction: bool, set_cookies: tuple[str, ...]
    ) -> None:
        nonlocal clock
        clock += 1
        now = float(clock)
        host = _host(url)
        host_site = registrable_domain(host, rules)
        first = host_site == site

        if first:
            cookie_action, set_cookie_action = "pass", "accept"
        elif policy is PolicyKind.ACCEPT_ALL:
            cookie_action, set_cookie_action = "attach", "accept"
        elif policy is PolicyKind.BLOCK_THIRD_PARTY:
            cookie_action, set_cookie_action = "strip", "drop"
        elif policy is PolicyKind.VISITED_BASED:
            if host_site.value in visited:
                cookie_action, set_cookie_action = "attach", "accept"
            else:
                cookie_action, set_cookie_action = "strip", "drop"
        else:
            pair = (host_site.value, site.value)
            if interaction or pair in activated:
                cookie_action, set_cookie_action = "attach", "accept"
            else:
                cookie_action, set_cookie_action = "strip", "quarantine"

        header = header_for(url, now) if cookie_action in ("pass", "attach") else None
        log.append(
            RequestLogEntry(
                url=url,
                party="first" if first else "third",
                cookie_action=cookie_action,
                set_cookie_action=set_cookie_action,
                cookie_header=header,
            )
        )
        if not first and header:
            pair = (host_site.value, site.value)
            bearing.add(pair)
            if pair not in consented:
                non_consented.add(pair)

        for raw in set_cookies:
            try:
                cookie = parse_set_cookie(raw, url, now)
            except CookieParseError:
                continue
            record = {
                "name": cookie.name,
                "value": cookie.value,
                "domain": cookie.domain,
                "host_only": cookie.host_only,
                "path": cookie.path,
                "expires": cookie.expires,
                "secure": cookie.secure,
                "created_at": cookie.created_at,
            }
            if not record["host_only"]:
                cookie_site = registrable_domain(record["domain"], rules)
                if cookie_site.host_literal:
                    if record["domain"] != host:
                        continue  # bare public suffix: rejected
                    record["host_only"] = True
                elif not (
                    host == record["domain"]
                    or host.endswith("." + record["domain"])
                ):
                    continue  # domain mismatch: rejected
            if set_cookie_action == "accept":
                upsert(active, record)
            elif set_cookie_action == "quarantine":
                pair = (registrable_domain(record["domain"], rules).value, site.value)
                upsert(quarantine.setdefault(pair, []), record)

    timeline = sorted(
        [("page", p.seq, p) for p in trace.pages]
        + [("event", e.seq, e) for e in trace.events],
        key=lambda item: item[1],
    )
    current_page = None
    current_site = None
    for kind, _seq, item in timeline:
        if kind == "page":
            current_page = item
            current_site = registrable_domain(_host(item.top_level_url), rules)
            visited.add(current_site.value)
            for request in item.requests:
                handle_request(request.url, current_site, False, request.set_cookies)
            continue

        frame = current_page.frames[item.frame_id]
        frame_site = registrable_domain(_host(frame.url), rules)
        is_widget = frame.depth == 1 and frame_site != current_site
        pair = (frame_site.value, current_site.value)
        if is_widget:
            consented.add(pair)
        if (
            policy is PolicyKind.INTERACTION_BASED
            and is_widget
            and pair not in activated
        ):
            activated.add(pair)
            for record in quarantine.pop(pair, []):
                upsert(active, record)
            handle_request(frame.url, current_site, True, ())

    ad_risk = 0
    for page in trace.pages:
        page_site = registrable_domain(_host(page.top_level_url), rules)
        for frame in page.frames.values():
            if frame.depth != 1:
                continue
            if registrable_domain(_host(frame.url), rules) == page_site:
                continue
            path = urlsplit(frame.url).path.lower()
            if any(token in path for token in AD_PATH_TOKENS):
                ad_risk += 1

    return ExposureReport(
        policy=policy,
        cookie_bearing_pairs=sorted(bearing),
        non_consented_pairs=sorted(non_consented),
        per_request_log=log,
        single_iframe_ad_risk_count=ad_risk,
        decision_latency=None,
    )
