"""Public-suffix rules, registrable domains, and first/third-party classification.

Implements the standard public-suffix matching algorithm (one rule per line,
``//`` comments, ``*`` wildcards, ``!`` exceptions). A host's registrable
domain is the matched public suffix plus one label; every request is first
party exactly when its host's registrable domain equals the top-level site's.

A small snapshot of the public suffix list is bundled for offline use; a full
list can be supplied via configuration.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

BUNDLED_SUFFIX_FILE = "psl_snapshot.dat"


class SuffixListError(ValueError):
    """A suffix-list file could not be parsed."""


@dataclass(frozen=True)
class SuffixRule:
    """One public-suffix rule; labels are stored rightmost-first."""

    labels: tuple[str, ...]
    wildcard: bool = False
    exception: bool = False

    def matches(self, host_labels: tuple[str, ...]) -> bool:
        """True if this rule matches a host given as rightmost-first labels."""
        if len(host_labels) < len(self.labels):
            return False
        return all(
            rule_label == "*" or rule_label == host_label
            for rule_label, host_label in zip(self.labels, host_labels)
        )


@dataclass(frozen=True)
class SuffixRuleSet:
    """An immutable, indexed set of suffix rules."""

    rules: frozenset[SuffixRule]
    _by_tld: dict[str, list[SuffixRule]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        for rule in self.rules:
            self._by_tld.setdefault(rule.labels[0], []).append(rule)

    def __len__(self) -> int:
        return len(self.rules)

    def public_suffix_length(self, host_labels: tuple[str, ...]) -> int:
        """Number of labels in the public suffix of a rightmost-first host.

        Exception rules take priority, then the longest matching rule; with
        no match the implicit ``*`` rule applies (the last label is the
        suffix).
        """
        candidates = self._by_tld.get(host_labels[0], [])
        if "*" in self._by_tld:
            candidates = candidates + self._by_tld["*"]
        matches = [rule for rule in candidates if rule.matches(host_labels)]
        exceptions = [rule for rule in matches if rule.exception]
        if exceptions:
            # The exception names a registrable domain: its suffix is the
            # rule minus the leftmost label.
            best = max(exceptions, key=lambda rule: len(rule.labels))
            return len(best.labels) - 1
        if matches:
            return max(len(rule.labels) for rule in matches)
        return 1


@dataclass(frozen=True)
class RegistrableDomain:
    """A site identity: eTLD+1 for DNS names, the host itself for literals.

    IP addresses, single-label hosts, and hosts that are themselves a public
    suffix carry ``host_literal=True`` and act as their own site.
    """

    value: str
    host_literal: bool = False

    def __str__(self) -> str:
        return self.value


class PartyClass(Enum):
    FIRST_PARTY = "first"
    THIRD_PARTY = "third"


def load_suffix_rules(text: str) -> SuffixRuleSet:
    """Parse suffix-list file content into a rule set.

    Lines are rules; ``//`` starts a comment; blank lines are ignored.
    Raises :class:`SuffixListError` (with the line number) for a rule with
    embedded whitespace or empty labels.
    """
    rules: set[SuffixRule] = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("//"):
            continue
        if any(ch.isspace() for ch in line):
            raise SuffixListError(f"line {lineno}: embedded whitespace in rule {line!r}")
        exception = line.startswith("!")
        if exception:
            line = line[1:]
        labels = tuple(reversed(line.lower().split(".")))
        if not labels or any(label == "" for label in labels):
            raise SuffixListError(f"line {lineno}: empty label in rule {raw_line.strip()!r}")
        rules.add(SuffixRule(labels=labels, wildcard="*" in labels, exception=exception))
    return SuffixRuleSet(rules=frozenset(rules))


def load_suffix_file(path: str) -> SuffixRuleSet:
    with open(path, encoding="utf-8") as fh:
        return load_suffix_rules(fh.read())


def bundled_rules() -> SuffixRuleSet:
    """The snapshot suffix list shipped with the package."""
    text = resources.files(__package__).joinpath("data", BUNDLED_SUFFIX_FILE).read_text("utf-8")
    return load_suffix_rules(text)


def _fold_host(host: str) -> str:
    folded = host.strip().lower().rstrip(".")
    if folded.startswith("[") and folded.endswith("]"):
        folded = folded[1:-1]
    return folded


def _is_ip_literal(host: str) -> bool:
    try:
        ipaddress.ip_address(host)
    except ValueError:
        return False
    return True


def registrable_domain(host: str, rules: SuffixRuleSet) -> RegistrableDomain:
    """Registrable domain (eTLD+1) of a host; total after case folding.

    IP literals, single-label hosts, and hosts equal to a public suffix are
    their own site and come back as host literals.
    """
    folded = _fold_host(host)
    if not folded:
        raise ValueError("empty host")
    if _is_ip_literal(folded):
        return RegistrableDomain(value=folded, host_literal=True)
    labels = folded.split(".")
    if len(labels) == 1 or any(label == "" for label in labels):
        return RegistrableDomain(value=folded, host_literal=True)
    suffix_len = rules.public_suffix_length(tuple(reversed(labels)))
    if len(labels) <= suffix_len:
        return RegistrableDomain(value=folded, host_literal=True)
    return RegistrableDomain(value=".".join(labels[-(suffix_len + 1):]))


def classify(
    request_host: str, top_level_site: RegistrableDomain, rules: SuffixRuleSet
) -> PartyClass:
    """First party iff the request host registers under the top-level site."""
    if registrable_domain(request_host, rules) == top_level_site:
        return PartyClass.FIRST_PARTY
    return PartyClass.THIRD_PARTY
