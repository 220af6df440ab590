"""Policy decisions, frame heuristic, and the two-click state machine."""

import pytest
from hypothesis import given, strategies as st

from cookiegate.cookies import CookieJar, parse_set_cookie
from cookiegate.policy import (
    ActivationTable,
    ClickAction,
    CookieAction,
    FrameContext,
    FrameKind,
    PolicyEngine,
    PolicyKind,
    RequestContext,
    SetCookieAction,
    classify_frame,
    decide_request,
    on_click,
)
from cookiegate.psl import load_suffix_rules, registrable_domain

RULES = load_suffix_rules("com\nco.uk")
PUB = registrable_domain("pub.com", RULES)
OSN = registrable_domain("osn.com", RULES)

ALL_POLICIES = list(PolicyKind)


def frame(depth=0, origin="pub.com", site=PUB, frame_id="f0", parent=None):
    if depth > 0 and parent is None:
        parent = f"f{depth - 1}"
    return FrameContext(
        frame_id=frame_id,
        parent_frame_id=parent,
        depth=depth,
        frame_origin=origin,
        top_level_site=site,
    )


def request(
    url="http://pub.com/a.png",
    destination="subresource",
    frm=None,
    site=PUB,
    interaction=False,
    method="GET",
):
    return RequestContext(
        method=method,
        url=url,
        destination=destination,
        frame=frm if frm is not None else frame(),
        site=site,
        interaction_initiated=interaction,
    )


# -- context validation -----------------------------------------------------


def test_frame_depth_parent_consistency():
    with pytest.raises(ValueError):
        FrameContext("f1", "f0", 0, "pub.com", PUB)
    with pytest.raises(ValueError):
        FrameContext("f1", None, 1, "pub.com", PUB)


def test_document_requests_are_top_level():
    with pytest.raises(ValueError):
        request(destination="document", frm=frame(depth=1, origin="osn.com"))


def test_unknown_destination_rejected():
    with pytest.raises(ValueError):
        request(destination="worker")


# -- frame heuristic ----------------------------------------------------------


def test_widget_candidate_is_single_third_party_iframe():
    f = frame(depth=1, origin="osn.com")
    assert classify_frame(f, RULES) is FrameKind.WIDGET_CANDIDATE


def test_nested_third_party_frame_is_advertisement():
    f = frame(depth=3, origin="adnet.com", parent="f2")
    assert classify_frame(f, RULES) is FrameKind.ADVERTISEMENT_CANDIDATE


def test_first_party_iframe_is_non_interactive():
    assert classify_frame(frame(depth=1, origin="pub.com"), RULES) is FrameKind.NON_INTERACTIVE
    assert classify_frame(frame(depth=1, origin="cdn.pub.com"), RULES) is FrameKind.NON_INTERACTIVE


def test_top_level_frame_is_non_interactive():
    assert classify_frame(frame(depth=0), RULES) is FrameKind.NON_INTERACTIVE


def test_heuristic_ignores_frame_identity():
    a = frame(depth=1, origin="osn.com", frame_id="a")
    b = frame(depth=1, origin="osn.com", frame_id="zz", parent="other")
    assert classify_frame(a, RULES) == classify_frame(b, RULES)


# -- request decisions --------------------------------------------------------


@pytest.mark.parametrize("policy", ALL_POLICIES)
def test_first_party_passes_unchanged_under_every_policy(policy):
    decision = decide_request(request("http://cdn.pub.com/a.png"), ActivationTable(), policy, RULES)
    assert decision.cookie_action is CookieAction.PASS_UNCHANGED
    assert decision.set_cookie_action is SetCookieAction.ACCEPT


def widget_request(interaction=False):
    return request(
        "http://osn.com/like.html",
        destination="iframe",
        frm=frame(depth=1, origin="osn.com"),
        interaction=interaction,
    )


def test_accept_all_attaches_third_party():
    decision = decide_request(widget_request(), ActivationTable(), PolicyKind.ACCEPT_ALL, RULES)
    assert decision == (decision.__class__(CookieAction.ATTACH, SetCookieAction.ACCEPT))


def test_block_third_party_strips_and_drops():
    decision = decide_request(widget_request(), ActivationTable(), PolicyKind.BLOCK_THIRD_PARTY, RULES)
    assert decision.cookie_action is CookieAction.STRIP
    assert decision.set_cookie_action is SetCookieAction.DROP


def test_visited_based_requires_first_party_visit():
    table = ActivationTable()
    blocked = decide_request(widget_request(), table, PolicyKind.VISITED_BASED, RULES)
    assert blocked.cookie_action is CookieAction.STRIP
    table.record_first_party_visit(OSN)
    allowed = decide_request(widget_request(), table, PolicyKind.VISITED_BASED, RULES)
    assert allowed.cookie_action is CookieAction.ATTACH


def test_interaction_based_quarantines_until_activated():
    table = ActivationTable()
    before = decide_request(widget_request(), table, PolicyKind.INTERACTION_BASED, RULES)
    assert before.cookie_action is CookieAction.STRIP
    assert before.set_cookie_action is SetCookieAction.QUARANTINE
    table.activate(OSN, PUB)
    after = decide_request(widget_request(), table, PolicyKind.INTERACTION_BASED, RULES)
    assert after.cookie_action is CookieAction.ATTACH
    assert after.set_cookie_action is SetCookieAction.ACCEPT


def test_interaction_initiated_reload_attaches():
    decision = decide_request(
        widget_request(interaction=True), ActivationTable(), PolicyKind.INTERACTION_BASED, RULES
    )
    assert decision.cookie_action is CookieAction.ATTACH


def test_invisible_pixel_stays_blocked_forever():
    pixel = request("http://tracker.com/px.gif", destination="subresource", frm=frame())
    table = ActivationTable()
    decision = decide_request(pixel, table, PolicyKind.INTERACTION_BASED, RULES)
    assert decision.cookie_action is CookieAction.STRIP
    assert decision.set_cookie_action is SetCookieAction.QUARANTINE
    # no frame to click: the depth-0 frame is non-interactive
    assert on_click(pixel.frame, table, RULES) == ClickAction.pass_through()
    assert table.activated == set()


def test_drop_directive_refuses_new_third_party_cookies():
    decision = decide_request(
        widget_request(), ActivationTable(), PolicyKind.INTERACTION_BASED, RULES,
        drop_new_third_party_cookies=True,
    )
    assert decision.set_cookie_action is SetCookieAction.DROP


def test_whitelist_grants_attachment_without_clicks():
    table = ActivationTable()
    table.whitelist_add(OSN, PUB)
    decision = decide_request(widget_request(), table, PolicyKind.INTERACTION_BASED, RULES)
    assert decision.cookie_action is CookieAction.ATTACH


def test_whitelist_remove_restores_blocking():
    table = ActivationTable()
    table.whitelist_add(OSN, PUB)
    table.whitelist_remove(OSN, PUB)
    decision = decide_request(widget_request(), table, PolicyKind.INTERACTION_BASED, RULES)
    assert decision.cookie_action is CookieAction.STRIP


def test_whitelist_remove_nonmember_is_noop():
    table = ActivationTable()
    table.whitelist_remove(OSN, PUB)
    assert table.whitelist == set()


# -- clicks -------------------------------------------------------------------


def test_first_click_activates_and_reloads():
    table = ActivationTable()
    action = on_click(frame(depth=1, origin="osn.com", frame_id="w1"), table, RULES)
    assert action == ClickAction.reload("w1")
    assert ("osn.com", "pub.com") in table.activated


def test_second_click_passes_through():
    table = ActivationTable()
    widget = frame(depth=1, origin="osn.com", frame_id="w1")
    assert on_click(widget, table, RULES).kind == "reload"
    assert on_click(widget, table, RULES) == ClickAction.pass_through()


def test_ad_click_passes_through_without_state_change():
    table = ActivationTable()
    ad = frame(depth=2, origin="adnet.com", parent="f1")
    assert on_click(ad, table, RULES) == ClickAction.pass_through()
    assert table.activated == set()


def test_whitelisted_widget_click_needs_no_activation():
    table = ActivationTable()
    table.whitelist_add(OSN, PUB)
    action = on_click(frame(depth=1, origin="osn.com"), table, RULES)
    assert action == ClickAction.pass_through()
    assert table.activated == set()


def test_reload_at_most_once_per_pair():
    table = ActivationTable()
    reloads = 0
    for frame_id in ("w1", "w2", "w1"):
        action = on_click(frame(depth=1, origin="osn.com", frame_id=frame_id), table, RULES)
        reloads += action.kind == "reload"
    assert reloads == 1


# -- activation table ---------------------------------------------------------


def test_activate_is_idempotent():
    table = ActivationTable()
    table.activate(OSN, PUB)
    table.activate(OSN, PUB)
    assert table.activated == {("osn.com", "pub.com")}


def test_activate_rejects_first_party():
    with pytest.raises(ValueError):
        ActivationTable().activate(PUB, PUB)


def test_record_visit_idempotent():
    table = ActivationTable()
    table.record_first_party_visit(OSN)
    table.record_first_party_visit(OSN)
    assert table.visited_first_party == {"osn.com"}


def test_activation_scoping_is_per_site():
    table = ActivationTable()
    other = registrable_domain("other.com", RULES)
    table.activate(OSN, PUB)
    on_other_site = request(
        "http://osn.com/like.html",
        destination="iframe",
        frm=frame(depth=1, origin="osn.com", site=other),
        site=other,
    )
    decision = decide_request(on_other_site, table, PolicyKind.INTERACTION_BASED, RULES)
    assert decision.cookie_action is CookieAction.STRIP


# -- engine glue ----------------------------------------------------------------


def test_engine_activate_releases_quarantine():
    jar = CookieJar(RULES)
    engine = PolicyEngine.create(PolicyKind.INTERACTION_BASED, RULES, jar=jar)
    cookie = parse_set_cookie("track=9", "http://osn.com/like", 1.0)
    jar.store(cookie, source_host="osn.com", site=PUB, directive="quarantine")
    released = engine.activate(OSN, PUB)
    assert released == 1
    assert jar.cookies_for("http://osn.com/like", 2.0) == "track=9"


def test_engine_decide_collects_latency():
    engine = PolicyEngine.create(PolicyKind.INTERACTION_BASED, RULES)
    engine.decide(widget_request())
    assert len(engine.latency_ns) == 1 and engine.latency_ns[0] >= 0


def test_whitelist_persistence_round_trip(tmp_path):
    path = str(tmp_path / "whitelist.json")
    engine = PolicyEngine.create(PolicyKind.INTERACTION_BASED, RULES, whitelist_path=path)
    engine.whitelist_add(OSN, PUB)

    fresh = PolicyEngine.create(PolicyKind.INTERACTION_BASED, RULES, whitelist_path=path)
    assert ("osn.com", "pub.com") in fresh.table.whitelist
    fresh.whitelist_remove(OSN, PUB)

    third = PolicyEngine.create(PolicyKind.INTERACTION_BASED, RULES, whitelist_path=path)
    assert third.table.whitelist == set()


# -- properties ------------------------------------------------------------------

hosts = st.sampled_from(
    ["pub.com", "cdn.pub.com", "osn.com", "api.osn.com", "tracker.com", "adnet.com"]
)


@given(hosts, st.sampled_from(ALL_POLICIES))
def test_first_party_stream_is_policy_independent(host, policy):
    ctx = request(f"http://{host}/x", frm=frame())
    baseline = decide_request(ctx, ActivationTable(), PolicyKind.ACCEPT_ALL, RULES)
    decision = decide_request(ctx, ActivationTable(), policy, RULES)
    if baseline.cookie_action is CookieAction.PASS_UNCHANGED:
        assert decision == baseline


@given(st.sets(st.tuples(hosts, hosts), max_size=5))
def test_decide_is_pure_given_state(pairs):
    table = ActivationTable()
    for tp, site in pairs:
        if registrable_domain(tp, RULES).value != registrable_domain(site, RULES).value:
            table.activate(registrable_domain(tp, RULES), registrable_domain(site, RULES))
    ctx = widget_request()
    first = decide_request(ctx, table, PolicyKind.INTERACTION_BASED, RULES)
    second = decide_request(ctx, table, PolicyKind.INTERACTION_BASED, RULES)
    assert first == second
