"""Suffix-rule parsing and party classification."""

import pytest
from hypothesis import given, strategies as st

from cookiegate.psl import (
    PartyClass,
    RegistrableDomain,
    SuffixListError,
    bundled_rules,
    classify,
    load_suffix_rules,
    registrable_domain,
)

RULES = load_suffix_rules("com\nco.uk\n*.ck\n!www.ck\ngithub.io\nio\nuk")


def test_parse_rule_kinds():
    rules = load_suffix_rules("com\nco.uk\n*.ck\n!www.ck")
    assert len(rules) == 4
    assert sum(1 for r in rules.rules if r.wildcard) == 1
    assert sum(1 for r in rules.rules if r.exception) == 1


def test_parse_empty_input():
    assert len(load_suffix_rules("")) == 0


def test_parse_skips_comments_and_blanks():
    assert len(load_suffix_rules("// comment\n\ncom\n")) == 1


def test_parse_duplicate_rules_collapse():
    assert len(load_suffix_rules("com\ncom\n")) == 1


def test_parse_embedded_whitespace_errors_with_line_number():
    with pytest.raises(SuffixListError, match="line 2"):
        load_suffix_rules("com\nco uk\n")


def test_parse_empty_label_rejected():
    with pytest.raises(SuffixListError, match="line 1"):
        load_suffix_rules("co..uk\n")


# Expected values hand-checked against the public-suffix matching algorithm
# (exception rules first, then the longest match, implicit "*" fallback).
@pytest.mark.parametrize(
    "host,expected",
    [
        ("example.com", "example.com"),
        ("WwW.example.COM", "example.com"),
        ("a.b.example.co.uk", "example.co.uk"),
        ("example.co.uk", "example.co.uk"),
        ("user.github.io", "user.github.io"),
        # exception rule: www.ck is registrable despite *.ck
        ("www.ck", "www.ck"),
        ("a.www.ck", "www.ck"),
        # wildcard: any single label under ck is a public suffix
        ("a.b.foo.ck", "b.foo.ck"),
        # unlisted TLD falls back to the implicit "*" rule
        ("example.zz", "example.zz"),
        ("a.b.example.zz", "example.zz"),
    ],
)
def test_registrable_domain_dns(host, expected):
    assert registrable_domain(host, RULES) == RegistrableDomain(expected)


@pytest.mark.parametrize(
    "host,value",
    [
        ("127.0.0.1", "127.0.0.1"),
        ("[::1]", "::1"),
        ("localhost", "localhost"),
        # a host that is itself a public suffix acts as its own site
        ("co.uk", "co.uk"),
        ("foo.ck", "foo.ck"),
        ("github.io", "github.io"),
    ],
)
def test_host_literals(host, value):
    got = registrable_domain(host, RULES)
    assert got == RegistrableDomain(value, host_literal=True)


def test_empty_rule_set_falls_back_to_last_label():
    empty = load_suffix_rules("")
    assert registrable_domain("a.b.c", empty) == RegistrableDomain("b.c")


def test_trailing_dot_and_case_folding():
    assert registrable_domain("Example.COM.", RULES).value == "example.com"


def test_empty_host_rejected():
    with pytest.raises(ValueError):
        registrable_domain("", RULES)


def test_classify_first_party_subdomain():
    site = registrable_domain("pub.com", RULES)
    assert classify("cdn.pub.com", site, RULES) is PartyClass.FIRST_PARTY


def test_classify_widget_host_is_third_party():
    site = registrable_domain("pub.com", RULES)
    assert classify("osn.com", site, RULES) is PartyClass.THIRD_PARTY


def test_classify_shared_public_suffix_is_not_same_party():
    site = registrable_domain("bar.co.uk", RULES)
    assert classify("foo.co.uk", site, RULES) is PartyClass.THIRD_PARTY


def test_bundled_snapshot_loads():
    rules = bundled_rules()
    assert registrable_domain("a.example.co.uk", rules).value == "example.co.uk"
    assert registrable_domain("pub.test", rules).value == "pub.test"


labels = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8)
hosts = st.lists(labels, min_size=1, max_size=5).map(".".join)


@given(hosts)
def test_own_registrable_domain_is_first_party(host):
    assert classify(host, registrable_domain(host, RULES), RULES) is PartyClass.FIRST_PARTY


@given(st.lists(labels, min_size=3, max_size=6, unique=True))
def test_longer_matching_rule_never_shortens_result(host_labels):
    host = ".".join(host_labels)
    for cut in range(1, len(host_labels) - 1):
        shorter = load_suffix_rules(".".join(host_labels[-cut:]))
        longer = load_suffix_rules(
            ".".join(host_labels[-cut:]) + "\n" + ".".join(host_labels[-(cut + 1):])
        )
        a = registrable_domain(host, shorter)
        b = registrable_domain(host, longer)
        assert len(b.value.split(".")) >= len(a.value.split("."))


@given(hosts)
def test_deterministic(host):
    assert registrable_domain(host, RULES) == registrable_domain(host, RULES)
