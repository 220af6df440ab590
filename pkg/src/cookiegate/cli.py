"""Command-line entry point: serve the proxy, replay traces, manage state.

Exit codes: 0 success, 2 unreadable or invalid trace/config input,
64 usage errors, 1 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request

from .cookies import write_json_atomic
from .policy import PolicyKind
from .psl import bundled_rules, load_suffix_file
from .replay import ComparisonResult, TraceParseError, compare, load_trace, simulate

EX_OK = 0
EX_PARSE = 2
EX_USAGE = 64

POLICY_NAMES = [kind.value for kind in PolicyKind]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def build_parser() -> _Parser:
    parser = _Parser(prog="cookiegate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the enforcing proxy until interrupted")
    serve.add_argument("--config", help="JSON config file mirroring the proxy settings")
    serve.add_argument("--listen", help="proxy listen address host:port")
    serve.add_argument("--control", help="control API address host:port")
    serve.add_argument("--policy", choices=POLICY_NAMES)

    replay = sub.add_parser("replay", help="replay a trace under one policy")
    replay.add_argument("trace", help="trace JSON file")
    replay.add_argument("--policy", choices=POLICY_NAMES, default="interaction")
    _output_options(replay)

    cmp_cmd = sub.add_parser("compare", help="replay a trace under several policies")
    cmp_cmd.add_argument("trace", help="trace JSON file")
    cmp_cmd.add_argument(
        "--policies", nargs="+", choices=POLICY_NAMES + ["all"], default=["all"]
    )
    _output_options(cmp_cmd)

    wl = sub.add_parser("whitelist", help="inspect or edit a whitelist file")
    wl.add_argument("action", choices=["list", "add", "remove"])
    wl.add_argument("site", nargs="?")
    wl.add_argument("third_party", nargs="?")
    wl.add_argument("--file", required=True, help="whitelist JSON file")

    report = sub.add_parser("report", help="fetch the live exposure report from a proxy")
    report.add_argument(
        "--control", default="http://127.0.0.1:8900", help="control API base URL"
    )
    _output_options(report)
    return parser


def _output_options(parser) -> None:
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.add_argument("--out", default="-", help="output file, '-' for stdout")
    parser.add_argument(
        "--suffix-list", help="public suffix list file (defaults to the bundled snapshot)"
    )
    parser.add_argument(
        "--latency",
        action="store_true",
        help="include measured decision latency (makes output non-reproducible)",
    )


def _load_rules(args):
    path = getattr(args, "suffix_list", None)
    return load_suffix_file(path) if path else bundled_rules()


def _read_trace(path: str):
    try:
        return load_trace(path)
    except OSError as exc:
        print(f"error: cannot read trace {path}: {exc.strerror}", file=sys.stderr)
        raise SystemExit(EX_PARSE)
    except TraceParseError as exc:
        print(f"error: invalid trace {path}: {exc}", file=sys.stderr)
        raise SystemExit(EX_PARSE)


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _render(result: ComparisonResult, args) -> str:
    if args.format == "csv":
        return result.to_csv(include_latency=args.latency)
    return result.to_json(include_latency=args.latency)


def cmd_replay(args) -> int:
    trace = _read_trace(args.trace)
    report = simulate(trace, PolicyKind.from_name(args.policy), _load_rules(args))
    result = ComparisonResult(reports=[report], dominance={})
    _emit(_render(result, args), args.out)
    return EX_OK


def cmd_compare(args) -> int:
    trace = _read_trace(args.trace)
    names = POLICY_NAMES if "all" in args.policies else list(dict.fromkeys(args.policies))
    policies = [PolicyKind.from_name(name) for name in names]
    result = compare(trace, policies, _load_rules(args))
    _emit(_render(result, args), args.out)
    return EX_OK


def cmd_whitelist(args) -> int:
    entries: list[dict] = []
    if os.path.exists(args.file):
        try:
            with open(args.file, encoding="utf-8") as fh:
                entries = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read whitelist {args.file}: {exc}", file=sys.stderr)
            return EX_PARSE
    if args.action == "list":
        for entry in sorted(entries, key=lambda e: (e["site"], e["thirdParty"])):
            print(f"{entry['thirdParty']} @ {entry['site']}")
        return EX_OK
    if not args.site or not args.third_party:
        print("error: add/remove require SITE and THIRD_PARTY", file=sys.stderr)
        return EX_USAGE
    if args.site == args.third_party:
        print("error: third party must differ from site", file=sys.stderr)
        return EX_USAGE
    entry = {"thirdParty": args.third_party, "site": args.site}
    entries = [e for e in entries if e != entry]
    if args.action == "add":
        entries.append(entry)
    write_json_atomic(args.file, sorted(entries, key=lambda e: (e["site"], e["thirdParty"])))
    return EX_OK


def cmd_report(args) -> int:
    url = args.control.rstrip("/") + "/ctl/v1/report"
    if args.latency:
        url += "?latency=1"
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            data = json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot fetch {url}: {exc}", file=sys.stderr)
        return 1
    if args.format == "json":
        _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", args.out)
    else:
        # single-row CSV mirror of the comparison table
        pairs = ";".join("@".join(p) for p in data.get("cookie_bearing_pairs", []))
        bad = ";".join("@".join(p) for p in data.get("non_consented_pairs", []))
        lines = [
            "policy,cookie_bearing_pairs,non_consented_pairs,requests,single_iframe_ad_risk_count",
            ",".join(
                [
                    data.get("policy", ""),
                    pairs,
                    bad,
                    str(len(data.get("per_request_log", []))),
                    str(data.get("single_iframe_ad_risk_count", 0)),
                ]
            ),
        ]
        _emit("\n".join(lines) + "\n", args.out)
    return EX_OK


def cmd_serve(args) -> int:
    from .proxy import ProxyConfig, ProxyServer, ProxyStartupError

    try:
        config = ProxyConfig.load(
            config_path=args.config,
            listen=args.listen,
            control=args.control,
            policy=args.policy,
        )
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_PARSE
    try:
        server = ProxyServer(config)
    except ProxyStartupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return EX_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    handlers = {
        "serve": cmd_serve,
        "replay": cmd_replay,
        "compare": cmd_compare,
        "whitelist": cmd_whitelist,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
