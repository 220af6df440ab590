"""Interaction-gated third-party cookie policy.

Third-party content loads without its cookies; the first user click on a
widget activates that (third party, site) pair and reloads it with cookies.
Ships as an enforcing HTTP forward proxy with a JSON control API, plus a
deterministic trace-replay simulator that compares the interaction policy
against the accept-all, never-accept-third-party, and visited-based
policies.
"""

from .cookies import Cookie, CookieJar, CookieParseError, QuarantineKey, parse_set_cookie
from .exposure import ExposureReport
from .policy import (
    ActivationTable,
    ClickAction,
    CookieAction,
    FrameContext,
    FrameKind,
    PolicyEngine,
    PolicyKind,
    RequestContext,
    RequestDecision,
    SetCookieAction,
    classify_frame,
    decide_request,
    on_click,
)
from .psl import (
    PartyClass,
    RegistrableDomain,
    SuffixRuleSet,
    bundled_rules,
    classify,
    load_suffix_rules,
    registrable_domain,
)
from .replay import (
    SessionTrace,
    TraceParseError,
    compare,
    load_trace,
    parse_trace,
    simulate,
)

__version__ = "0.1.0"
