"""Enforcing HTTP forward proxy with a JSON control API.

Every proxied request goes through the policy decision: first-party requests
are forwarded with byte-identical headers (modulo hop-by-hop), third-party
requests have their Cookie header stripped or replaced from the proxy's own
jar, and response Set-Cookie headers are accepted, quarantined, or dropped.
CONNECT requests are tunneled opaquely unless TLS interception is enabled.

A proxy has no DOM, so the top-level site and frame depth of each request
are approximated from fetch-metadata headers and the per-client referer
chain; the approximation lives in RequestAttributor and nowhere else. Clicks
cannot be observed either: activation arrives through the control API and
triggers a reload of the registered widget frames.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import select
import socket
import ssl
import threading
import time
from dataclasses import dataclass, field
from http.client import HTTPConnection, HTTPSConnection
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from .cookies import CookieJar, CookieParseError, parse_set_cookie
from .exposure import ExposureRecorder
from .policy import (
    DOCUMENT,
    IFRAME,
    SUBRESOURCE,
    CookieAction,
    FrameContext,
    FrameKind,
    PolicyEngine,
    PolicyKind,
    RequestContext,
    SetCookieAction,
    classify_frame,
)
from .psl import (
    PartyClass,
    RegistrableDomain,
    bundled_rules,
    classify,
    load_suffix_file,
    registrable_domain,
)
from .replay import AD_PATH_TOKENS

logger = logging.getLogger(__name__)

HOP_BY_HOP = frozenset(
    {
        "connection",
        "proxy-connection",
        "keep-alive",
        "te",
        "trailer",
        "transfer-encoding",
        "upgrade",
        "proxy-authorization",
        "proxy-authenticate",
    }
)

_FRAME_KIND_RANK = {
    FrameKind.WIDGET_CANDIDATE: 2,
    FrameKind.ADVERTISEMENT_CANDIDATE: 1,
    FrameKind.NON_INTERACTIVE: 0,
}


class ProxyStartupError(RuntimeError):
    """The proxy could not start; the message names the cause."""


class UnknownFrameError(KeyError):
    pass


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {address!r}; expected host:port")
    return host, int(port)


@dataclass
class ProxyConfig:
    listen_address: str = "127.0.0.1:8888"
    control_address: str = "127.0.0.1:8900"
    policy: PolicyKind = PolicyKind.INTERACTION_BASED
    suffix_list_path: str | None = None
    whitelist_path: str | None = None
    jar_persistence_path: str | None = None
    drop_new_third_party_cookies: bool = False
    tls_intercept: bool = False
    host_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.listen_address == self.control_address:
            raise ValueError("listen and control addresses must differ")
        parse_address(self.listen_address)
        parse_address(self.control_address)

    @classmethod
    def from_dict(cls, data: dict) -> "ProxyConfig":
        kwargs = dict(data)
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if isinstance(kwargs.get("policy"), str):
            kwargs["policy"] = PolicyKind.from_name(kwargs["policy"])
        return cls(**kwargs)

    @classmethod
    def load(
        cls,
        config_path: str | None = None,
        *,
        listen: str | None = None,
        control: str | None = None,
        policy: str | None = None,
    ) -> "ProxyConfig":
        """Config file, overridden by environment, overridden by flags."""
        data: dict = {}
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        env_listen = os.environ.get("COOKIEGATE_LISTEN")
        env_control = os.environ.get("COOKIEGATE_CONTROL")
        if env_listen:
            data["listen_address"] = env_listen
        if env_control:
            data["control_address"] = env_control
        if listen:
            data["listen_address"] = listen
        if control:
            data["control_address"] = control
        if policy:
            data["policy"] = policy
        return cls.from_dict(data)


class RequestAttributor:
    """Approximates frame context for live traffic; the replayer gets exact
    frame trees, so only this class carries the proxy-side heuristic.

    Destination comes from Sec-Fetch-Dest when present (document / iframe /
    everything else a subresource), otherwise a request without a Referer is
    treated as a top-level navigation. Frame depth is the length of the
    referer chain of iframe-destination requests. The top-level site is the
    last document host seen for the client, falling back to the request host
    itself.
    """

    def __init__(self, rules):
        self._rules = rules
        self._clients: dict[str, dict] = {}
        self._ids = itertools.count(1)

    def _new_frame_id(self) -> str:
        return f"f{next(self._ids)}"

    def derive(self, client: str, method: str, url: str, headers: list[tuple[str, str]]) -> RequestContext:
        header_map: dict[str, str] = {}
        for key, value in headers:
            header_map.setdefault(key.lower(), value)
        host = (urlsplit(url).hostname or "").lower()
        dest_hint = header_map.get("sec-fetch-dest", "").lower()
        referer = header_map.get("referer")

        if dest_hint == "document" or (not dest_hint and not referer):
            destination = DOCUMENT
        elif dest_hint in ("iframe", "frame"):
            destination = IFRAME
        else:
            destination = SUBRESOURCE

        state = self._clients.setdefault(
            client, {"top_site": None, "top_frame": None, "frames": {}}
        )

        if destination == DOCUMENT:
            site = registrable_domain(host, self._rules)
            frame = FrameContext(
                frame_id=self._new_frame_id(),
                parent_frame_id=None,
                depth=0,
                frame_origin=host,
                top_level_site=site,
            )
            state["top_site"] = site
            state["top_frame"] = frame
            state["frames"] = {url: frame}
            return RequestContext(method, url, DOCUMENT, frame, site)

        site = state["top_site"]
        if site is None:
            site = registrable_domain(host, self._rules)
        top_frame: FrameContext | None = state["top_frame"]
        parent = state["frames"].get(referer) if referer else None
        if parent is None:
            parent = top_frame

        if destination == IFRAME:
            frame = FrameContext(
                frame_id=self._new_frame_id(),
                parent_frame_id=parent.frame_id if parent else None,
                depth=(parent.depth + 1) if parent else 0,
                frame_origin=host,
                top_level_site=site,
            )
            if frame.depth == 0:
                # no chain to hang the iframe on: treat as top-level
                frame = FrameContext(frame.frame_id, None, 0, host, site)
            state["frames"][url] = frame
            return RequestContext(method, url, IFRAME, frame, site)

        containing = parent or FrameContext(
            frame_id=self._new_frame_id(),
            parent_frame_id=None,
            depth=0,
            frame_origin=host,
            top_level_site=site,
        )
        return RequestContext(method, url, SUBRESOURCE, containing, site)


@dataclass
class FrameRecord:
    frame: FrameContext
    url: str
    site: RegistrableDomain
    third_party: RegistrableDomain


@dataclass
class _ThirdPartyStats:
    kind: FrameKind = FrameKind.NON_INTERACTIVE
    request_count: int = 0

    def observe(self, kind: FrameKind) -> None:
        self.request_count += 1
        if _FRAME_KIND_RANK[kind] > _FRAME_KIND_RANK[self.kind]:
            self.kind = kind


class ProxyServer:
    """Owns the policy engine, both listeners, and all shared registries.

    Engine and registry mutations are serialized under one lock; upstream
    network I/O happens outside it. Control-API reads take the same lock, so
    a site view never shows torn state.
    """

    def __init__(self, config: ProxyConfig):
        self.config = config
        try:
            self.rules = (
                load_suffix_file(config.suffix_list_path)
                if config.suffix_list_path
                else bundled_rules()
            )
        except OSError as exc:
            raise ProxyStartupError(
                f"cannot read suffix list {config.suffix_list_path}: {exc.strerror}"
            ) from exc
        jar = CookieJar(self.rules)
        if config.jar_persistence_path and os.path.exists(config.jar_persistence_path):
            try:
                jar.load_file(config.jar_persistence_path)
            except (OSError, ValueError, KeyError) as exc:
                raise ProxyStartupError(
                    f"cannot load jar {config.jar_persistence_path}: {exc}"
                ) from exc
        try:
            self.engine = PolicyEngine.create(
                config.policy,
                self.rules,
                jar=jar,
                drop_new_third_party_cookies=config.drop_new_third_party_cookies,
                whitelist_path=config.whitelist_path,
            )
        except (OSError, ValueError, KeyError) as exc:
            raise ProxyStartupError(
                f"cannot load whitelist {config.whitelist_path}: {exc}"
            ) from exc

        self._lock = threading.RLock()
        self.attributor = RequestAttributor(self.rules)
        self.recorder = ExposureRecorder()
        self.frames: dict[str, FrameRecord] = {}
        self.site_stats: dict[str, dict[str, _ThirdPartyStats]] = {}
        self._ad_risk_count = 0
        self._ca = None
        if config.tls_intercept:
            try:
                from .certs import CertificateAuthority
            except ImportError as exc:
                raise ProxyStartupError(
                    "tls_intercept requires the cryptography package (tls extra)"
                ) from exc
            self._ca = CertificateAuthority()

        self._proxy_httpd = self._bind(config.listen_address, _ProxyHandler)
        self._control_httpd = self._bind(config.control_address, _ControlHandler)
        self._threads: list[threading.Thread] = []
        self._stopped = threading.Event()

    def _bind(self, address: str, handler) -> "_Server":
        host, port = parse_address(address)
        try:
            return _Server((host, port), handler, self)
        except OSError as exc:
            raise ProxyStartupError(f"cannot bind {address}: {exc}") from exc

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        for httpd, name in (
            (self._proxy_httpd, "proxy"),
            (self._control_httpd, "control"),
        ):
            thread = threading.Thread(
                target=httpd.serve_forever, name=f"cookiegate-{name}", daemon=True
            )
            thread.start()
            self._threads.append(thread)
        logger.info(
            "proxy on %s, control on %s, policy %s",
            self.config.listen_address,
            self.config.control_address,
            self.config.policy.value,
        )

    def serve_forever(self) -> None:
        self.start()
        self._stopped.wait()

    def shutdown(self) -> None:
        if self._stopped.is_set():
            return
        self._stopped.set()
        for httpd in (self._proxy_httpd, self._control_httpd):
            if self._threads:  # shutdown() deadlocks unless serve_forever runs
                httpd.shutdown()
            httpd.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        with self._lock:
            if self.config.jar_persistence_path:
                self.engine.jar.save_file(self.config.jar_persistence_path)
            if self.config.whitelist_path:
                self.engine.table.save_whitelist(self.config.whitelist_path)
        if self._ca is not None:
            self._ca.close()

    @property
    def listen_port(self) -> int:
        return self._proxy_httpd.server_address[1]

    @property
    def control_port(self) -> int:
        return self._control_httpd.server_address[1]

    @property
    def bound_listen_address(self) -> tuple[str, int]:
        return self._proxy_httpd.server_address[:2]

    @property
    def bound_control_address(self) -> tuple[str, int]:
        return self._control_httpd.server_address[:2]

    # -- proxying ----------------------------------------------------------

    def resolve(self, host: str) -> str:
        return self.config.host_map.get(host, host)

    def handle_request(
        self,
        client: str,
        method: str,
        url: str,
        headers: list[tuple[str, str]],
        body: bytes | None,
        *,
        via_tls: bool = False,
    ) -> tuple[int, str, list[tuple[str, str]], bytes]:
        """Apply the policy to one request and forward it upstream."""
        split = urlsplit(url)
        host = (split.hostname or "").lower()
        if not host:
            return _error_response(400, "request URL has no host")
        with self._lock:
            ctx = self.attributor.derive(client, method, url, headers)
            decision = self.engine.decide(ctx)
            party = classify(host, ctx.site, self.rules)
            if ctx.destination == DOCUMENT:
                self.engine.record_visit(ctx.site)
                self.site_stats.setdefault(ctx.site.value, {})
            pair = None
            consented = False
            third_party = None
            if party is PartyClass.THIRD_PARTY:
                third_party = registrable_domain(host, self.rules)
                pair = (third_party.value, ctx.site.value)
                consented = ctx.interaction_initiated or self.engine.table.is_consented(
                    third_party, ctx.site
                )
                self._observe(ctx, third_party)

            out_headers = [
                (k, v) for k, v in headers if k.lower() not in HOP_BY_HOP
            ]
            attached: str | None = None
            if decision.cookie_action is CookieAction.STRIP:
                out_headers = [(k, v) for k, v in out_headers if k.lower() != "cookie"]
            elif decision.cookie_action is CookieAction.ATTACH:
                out_headers = [(k, v) for k, v in out_headers if k.lower() != "cookie"]
                attached = self.engine.jar.cookies_for(url, time.time())
                if attached:
                    out_headers.append(("Cookie", attached))
            else:
                attached = next(
                    (v for k, v in out_headers if k.lower() == "cookie"), None
                )
            self.recorder.record(
                url=url,
                party=party,
                decision=decision,
                cookie_header=attached,
                pair=pair,
                consented=consented,
            )

        status, reason, resp_headers, resp_body = self._forward(
            method, split, out_headers, body, via_tls=via_tls
        )
        if status < 0:
            return _error_response(502, reason)

        set_cookie_values = [v for k, v in resp_headers if k.lower() == "set-cookie"]
        if set_cookie_values:
            with self._lock:
                for raw in set_cookie_values:
                    try:
                        cookie = parse_set_cookie(raw, url, time.time())
                    except CookieParseError:
                        continue
                    self.engine.jar.store(
                        cookie,
                        source_host=host,
                        site=ctx.site,
                        directive=decision.set_cookie_action.value,
                    )
        if decision.set_cookie_action is not SetCookieAction.ACCEPT:
            resp_headers = [
                (k, v) for k, v in resp_headers if k.lower() != "set-cookie"
            ]

        down_headers = [
            (k, v)
            for k, v in resp_headers
            if k.lower() not in HOP_BY_HOP and k.lower() != "content-length"
        ]
        down_headers.append(("Content-Length", str(len(resp_body))))
        down_headers.append(("Connection", "close"))
        return status, reason, down_headers, resp_body

    def _forward(
        self,
        method: str,
        split,
        out_headers: list[tuple[str, str]],
        body: bytes | None,
        *,
        via_tls: bool,
    ) -> tuple[int, str, list[tuple[str, str]], bytes]:
        host = (split.hostname or "").lower()
        port = split.port or (443 if via_tls or split.scheme == "https" else 80)
        target = self.resolve(host)
        path = split.path or "/"
        if split.query:
            path += "?" + split.query
        try:
            if via_tls or split.scheme == "https":
                conn = HTTPSConnection(
                    target, port, timeout=20, context=ssl._create_unverified_context()
                )
            else:
                conn = HTTPConnection(target, port, timeout=20)
            conn.putrequest(method, path, skip_host=True, skip_accept_encoding=True)
            if not any(k.lower() == "host" for k, _ in out_headers):
                out_headers = [("Host", split.netloc)] + out_headers
            for key, value in out_headers:
                conn.putheader(key, value)
            conn.putheader("Connection", "close")
            if body and not any(k.lower() == "content-length" for k, _ in out_headers):
                conn.putheader("Content-Length", str(len(body)))
            conn.endheaders()
            if body:
                conn.send(body)
            resp = conn.getresponse()
            resp_body = resp.read()
            headers = list(resp.getheaders())
            status, reason = resp.status, resp.reason
            conn.close()
            return status, reason, headers, resp_body
        except OSError as exc:
            logger.warning("upstream %s failed: %s", host, exc)
            return -1, f"upstream {host} unreachable: {exc}", [], b""

    def _observe(self, ctx: RequestContext, third_party: RegistrableDomain) -> None:
        kind = classify_frame(ctx.frame, self.rules)
        stats = self.site_stats.setdefault(ctx.site.value, {}).setdefault(
            third_party.value, _ThirdPartyStats()
        )
        stats.observe(kind)
        if ctx.destination == IFRAME and kind is not FrameKind.NON_INTERACTIVE:
            self.frames[ctx.frame.frame_id] = FrameRecord(
                frame=ctx.frame, url=ctx.url, site=ctx.site, third_party=third_party
            )
            if kind is FrameKind.WIDGET_CANDIDATE:
                path = urlsplit(ctx.url).path.lower()
                if any(token in path for token in AD_PATH_TOKENS):
                    self._ad_risk_count += 1

    # -- reload ------------------------------------------------------------

    def execute_reload(self, frame_id: str) -> dict:
        """Reissue a registered frame's document request with cookies."""
        with self._lock:
            record = self.frames.get(frame_id)
            if record is None:
                raise UnknownFrameError(frame_id)
            self.engine.release_for(record.third_party, record.site)
            ctx = RequestContext(
                method="GET",
                url=record.url,
                destination=IFRAME,
                frame=record.frame,
                site=record.site,
                interaction_initiated=True,
            )
            decision = self.engine.decide(ctx)
            header = self.engine.jar.cookies_for(record.url, time.time())
            self.recorder.record(
                url=record.url,
                party=PartyClass.THIRD_PARTY,
                decision=decision,
                cookie_header=header,
                pair=(record.third_party.value, record.site.value),
                consented=True,
            )
        split = urlsplit(record.url)
        reload_headers = [("Host", split.netloc), ("Accept", "*/*")]
        if header:
            reload_headers.append(("Cookie", header))
        status, reason, _, _ = self._forward(
            "GET", split, reload_headers, None, via_tls=split.scheme == "https"
        )
        result = {
            "frame_id": frame_id,
            "url": record.url,
            "cookie_header": header,
        }
        if status < 0:
            result["error"] = reason
        else:
            result["status"] = status
        return result

    # -- control API backends ----------------------------------------------

    def sites(self) -> list[str]:
        with self._lock:
            return sorted(self.site_stats)

    def site_view(self, site: str) -> dict | None:
        now = time.time()
        with self._lock:
            stats = self.site_stats.get(site)
            if stats is None:
                return None
            third_parties = []
            for domain in sorted(stats):
                entry = stats[domain]
                pair = (domain, site)
                if pair in self.engine.table.whitelist:
                    state = "whitelisted"
                elif pair in self.engine.table.activated:
                    state = "activated"
                else:
                    state = "blocked"
                if self.engine.jar.has_active_for_domain(domain, now):
                    cookie_status = "has_cookies"
                elif self.engine.jar.quarantined(pair):
                    cookie_status = "quarantined"
                else:
                    cookie_status = "none"
                third_parties.append(
                    {
                        "domain": domain,
                        "frame_kind": entry.kind.value,
                        "state": state,
                        "cookie_status": cookie_status,
                        "request_count": entry.request_count,
                    }
                )
            return {"site": site, "third_parties": third_parties}

    def activate_pair(self, site: str, third_party: str) -> dict:
        tp = registrable_domain(third_party, self.rules)
        st = registrable_domain(site, self.rules)
        with self._lock:
            released = self.engine.activate(tp, st)
            matching = [
                frame_id
                for frame_id, record in self.frames.items()
                if record.third_party.value == tp.value and record.site.value == st.value
            ]
        reloaded = [self.execute_reload(frame_id) for frame_id in matching]
        return {
            "activated": True,
            "released": released,
            "reloaded": reloaded,
        }

    def whitelist_change(self, site: str, third_party: str, *, add: bool) -> None:
        tp = registrable_domain(third_party, self.rules)
        st = registrable_domain(site, self.rules)
        with self._lock:
            if add:
                self.engine.whitelist_add(tp, st)
            else:
                self.engine.whitelist_remove(tp, st)

    def build_report(self) -> "ExposureReport":
        with self._lock:
            return self.recorder.build(
                self.config.policy,
                ad_risk_count=self._ad_risk_count,
                latency_ns=list(self.engine.latency_ns),
            )


def _error_response(status: int, message: str) -> tuple[int, str, list, bytes]:
    body = json.dumps({"error": message}).encode("utf-8")
    headers = [
        ("Content-Type", "application/json"),
        ("Content-Length", str(len(body))),
        ("Connection", "close"),
    ]
    return status, message[:60], headers, body


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, handler, proxy: ProxyServer):
        self.proxy = proxy
        super().__init__(address, handler)


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _Server

    def log_message(self, fmt, *args):
        logger.debug("proxy %s " + fmt, self.client_address[0], *args)

    # The handler accepts any method and pipes it through the policy path.
    def _handle(self) -> None:
        if self.path.startswith("http://") or self.path.startswith("https://"):
            self._proxy_pass(self.path)
        else:
            self._respond(*_error_response(400, "expected absolute-form proxy request"))

    do_GET = do_POST = do_PUT = do_DELETE = do_HEAD = do_OPTIONS = do_PATCH = _handle

    def _read_body(self) -> bytes | None:
        length = self.headers.get("Content-Length")
        if length is None:
            return None
        return self.rfile.read(int(length))

    def _proxy_pass(self, url: str, *, via_tls: bool = False) -> None:
        body = self._read_body()
        headers = list(self.headers.items())
        status, reason, out_headers, out_body = self.server.proxy.handle_request(
            self.client_address[0],
            self.command,
            url,
            headers,
            body,
            via_tls=via_tls,
        )
        self._respond(status, reason, out_headers, out_body)

    def _respond(self, status, reason, headers, body) -> None:
        try:
            self.send_response_only(status, reason)
            for key, value in headers:
                self.send_header(key, value)
            self.end_headers()
            if body and self.command != "HEAD":
                self.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass
        self.close_connection = True

    def do_CONNECT(self) -> None:
        proxy = self.server.proxy
        try:
            host, port = parse_address(self.path)
        except ValueError:
            self._respond(*_error_response(400, f"bad CONNECT target {self.path!r}"))
            return
        if proxy.config.tls_intercept:
            self._mitm(host, port)
            return
        try:
            upstream = socket.create_connection((proxy.resolve(host), port), timeout=20)
        except OSError as exc:
            self._respond(*_error_response(502, f"CONNECT to {host}:{port} failed: {exc}"))
            return
        self.send_response_only(200, "Connection Established")
        self.end_headers()
        _pump(self.connection, upstream)
        self.close_connection = True

    def _mitm(self, host: str, port: int) -> None:
        proxy = self.server.proxy
        self.send_response_only(200, "Connection Established")
        self.end_headers()
        try:
            context = proxy._ca.server_context(host)
            tls_conn = context.wrap_socket(self.connection, server_side=True)
        except OSError as exc:
            logger.warning("TLS handshake with client failed for %s: %s", host, exc)
            self.close_connection = True
            return
        try:
            _MitmHandler(tls_conn, self.client_address, self.server, host, port)
        finally:
            try:
                tls_conn.close()
            except OSError:
                pass
            self.close_connection = True


class _MitmHandler(BaseHTTPRequestHandler):
    """Parses decrypted requests inside an intercepted tunnel and pipes them
    through the same policy path, rebuilding absolute https URLs."""

    protocol_version = "HTTP/1.1"

    def __init__(self, request, client_address, server, host: str, port: int):
        self._tunnel_host = host
        self._tunnel_port = port
        super().__init__(request, client_address, server)

    def log_message(self, fmt, *args):
        logger.debug("mitm " + fmt, *args)

    def _handle(self) -> None:
        authority = self._tunnel_host
        if self._tunnel_port != 443:
            authority += f":{self._tunnel_port}"
        url = f"https://{authority}{self.path}"
        _ProxyHandler._proxy_pass(self, url, via_tls=True)

    do_GET = do_POST = do_PUT = do_DELETE = do_HEAD = do_OPTIONS = do_PATCH = _handle
    _read_body = _ProxyHandler._read_body
    _respond = _ProxyHandler._respond


def _pump(a: socket.socket, b: socket.socket) -> None:
    """Blind bidirectional relay until either side closes."""
    sockets = [a, b]
    try:
        while True:
            readable, _, _ = select.select(sockets, [], [], 30)
            if not readable:
                break
            for sock in readable:
                data = sock.recv(65536)
                peer = b if sock is a else a
                if not data:
                    return
                peer.sendall(data)
    except OSError:
        pass
    finally:
        try:
            b.close()
        except OSError:
            pass


class _ControlHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _Server

    def log_message(self, fmt, *args):
        logger.debug("control " + fmt, *args)

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response_only(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _read_json(self) -> dict | None:
        length = int(self.headers.get("Content-Length", 0))
        if not length:
            return None
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None

    def do_OPTIONS(self) -> None:
        self.send_response_only(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        proxy = self.server.proxy
        path, _, query = self.path.partition("?")
        if path == "/ctl/v1/health":
            self._send_json(200, {"status": "ok", "policy": proxy.config.policy.value})
        elif path == "/ctl/v1/sites":
            self._send_json(200, proxy.sites())
        elif path.startswith("/ctl/v1/sites/"):
            site = path[len("/ctl/v1/sites/"):]
            view = proxy.site_view(site)
            if view is None:
                self._send_json(404, {"error": f"unknown site {site!r}"})
            else:
                self._send_json(200, view)
        elif path == "/ctl/v1/report":
            include_latency = "latency=1" in query
            report = proxy.build_report()
            self._send_json(200, report.to_dict(include_latency=include_latency))
        else:
            self._send_json(404, {"error": "not found"})

    def _pair_from_body(self) -> tuple[str, str] | None:
        data = self._read_json()
        if not data or "site" not in data or "thirdParty" not in data:
            self._send_json(400, {"error": "body must carry site and thirdParty"})
            return None
        site, third_party = data["site"], data["thirdParty"]
        if not site or not third_party or site == third_party:
            self._send_json(422, {"error": "third party must differ from site"})
            return None
        return site, third_party

    def do_POST(self) -> None:
        proxy = self.server.proxy
        if self.path == "/ctl/v1/activate":
            pair = self._pair_from_body()
            if pair is None:
                return
            site, third_party = pair
            try:
                result = proxy.activate_pair(site, third_party)
            except ValueError as exc:
                self._send_json(422, {"error": str(exc)})
                return
            self._send_json(200, result)
        elif self.path == "/ctl/v1/whitelist":
            pair = self._pair_from_body()
            if pair is None:
                return
            site, third_party = pair
            try:
                proxy.whitelist_change(site, third_party, add=True)
            except ValueError as exc:
                self._send_json(422, {"error": str(exc)})
                return
            self._send_json(200, {"whitelisted": True})
        else:
            self._send_json(404, {"error": "not found"})

    def do_DELETE(self) -> None:
        proxy = self.server.proxy
        if self.path == "/ctl/v1/whitelist":
            pair = self._pair_from_body()
            if pair is None:
                return
            site, third_party = pair
            proxy.whitelist_change(site, third_party, add=False)
            self._send_json(200, {"whitelisted": False})
        else:
            self._send_json(404, {"error": "not found"})
