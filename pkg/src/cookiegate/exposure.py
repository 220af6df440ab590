"""Tracking-exposure accounting shared by the replay simulator and the proxy.

Exposure is the set of (third party, site) pairs that received cookie-bearing
requests, split by whether user consent (click, activation, or whitelist)
preceded the send. Decision latency is collected alongside but is excluded
from serialized reports unless explicitly requested, so report files stay
byte-reproducible.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from .policy import PolicyKind, RequestDecision
from .psl import PartyClass


@dataclass(frozen=True)
class RequestLogEntry:
    url: str
    party: str  # "first" | "third"
    cookie_action: str
    set_cookie_action: str
    cookie_header: str | None

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "party": self.party,
            "decision": {
                "cookie_action": self.cookie_action,
                "set_cookie_action": self.set_cookie_action,
            },
            "cookie_header": self.cookie_header,
        }


@dataclass(frozen=True)
class LatencyStats:
    median_us: float
    p99_us: float
    samples: int

    @classmethod
    def from_ns(cls, samples_ns: list[int]) -> "LatencyStats | None":
        if not samples_ns:
            return None
        ordered = sorted(samples_ns)
        rank = max(math.ceil(0.99 * len(ordered)), 1)
        return cls(
            median_us=statistics.median(ordered) / 1000.0,
            p99_us=ordered[rank - 1] / 1000.0,
            samples=len(ordered),
        )

    def to_dict(self) -> dict:
        return {
            "median_us": self.median_us,
            "p99_us": self.p99_us,
            "samples": self.samples,
        }


@dataclass
class ExposureReport:
    policy: PolicyKind
    cookie_bearing_pairs: list[tuple[str, str]]
    non_consented_pairs: list[tuple[str, str]]
    per_request_log: list[RequestLogEntry]
    single_iframe_ad_risk_count: int
    decision_latency: LatencyStats | None = None

    def to_dict(self, *, include_latency: bool = False) -> dict:
        data = {
            "policy": self.policy.value,
            "cookie_bearing_pairs": [list(p) for p in self.cookie_bearing_pairs],
            "non_consented_pairs": [list(p) for p in self.non_consented_pairs],
            "per_request_log": [entry.to_dict() for entry in self.per_request_log],
            "single_iframe_ad_risk_count": self.single_iframe_ad_risk_count,
        }
        if include_latency and self.decision_latency is not None:
            data["decision_latency"] = self.decision_latency.to_dict()
        return data

    def comparable_dict(self) -> dict:
        """Everything derived from the trace; never the measured latency."""
        return self.to_dict(include_latency=False)

    def first_party_log(self) -> list[RequestLogEntry]:
        return [e for e in self.per_request_log if e.party == PartyClass.FIRST_PARTY.value]


class ExposureRecorder:
    """Accumulates per-request outcomes into an ExposureReport."""

    def __init__(self) -> None:
        self._cookie_bearing: set[tuple[str, str]] = set()
        self._non_consented: set[tuple[str, str]] = set()
        self._log: list[RequestLogEntry] = []

    def record(
        self,
        *,
        url: str,
        party: PartyClass,
        decision: RequestDecision,
        cookie_header: str | None,
        pair: tuple[str, str] | None = None,
        consented: bool = False,
    ) -> None:
        self._log.append(
            RequestLogEntry(
                url=url,
                party=party.value,
                cookie_action=decision.cookie_action.value,
                set_cookie_action=decision.set_cookie_action.value,
                cookie_header=cookie_header,
            )
        )
        if party is PartyClass.THIRD_PARTY and cookie_header and pair is not None:
            self._cookie_bearing.add(pair)
            if not consented:
                self._non_consented.add(pair)

    @property
    def request_count(self) -> int:
        return len(self._log)

    def build(
        self,
        policy: PolicyKind,
        *,
        ad_risk_count: int = 0,
        latency_ns: list[int] | None = None,
    ) -> ExposureReport:
        return ExposureReport(
            policy=policy,
            cookie_bearing_pairs=sorted(self._cookie_bearing),
            non_consented_pairs=sorted(self._non_consented),
            per_request_log=list(self._log),
            single_iframe_ad_risk_count=ad_risk_count,
            decision_latency=LatencyStats.from_ns(latency_ns or []),
        )
