"""Command-line entry point: loads rules, starts the proxy and control listeners."""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from dataclasses import replace

from .control import ControlServer, ServerConfig, parse_listen
from .events import EventLog
from .policy import (
    BASELINE_DEFAULT,
    BinaryPolicy,
    CookiePolicy,
    NotificationPolicy,
    RuleFileError,
    RuleStore,
)
from .proxy import FilterProxyServer

logger = logging.getLogger("filterplus")


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="filterplus",
        description="Content-filtering HTTP forward proxy with per-site rules.",
    )
    p.add_argument("--listen", default="127.0.0.1:8888", help="proxy listener (addr:port)")
    p.add_argument(
        "--control-listen", default="127.0.0.1:8899", help="control API / console listener"
    )
    p.add_argument("--rules-file", default="./filterplus-rules.json", help="rule file path")
    p.add_argument("--log-capacity", type=int, default=1024, help="event log ring size")
    p.add_argument(
        "--default-cookies",
        choices=[m.value for m in CookiePolicy],
        help="baseline cookies policy",
    )
    p.add_argument(
        "--default-images", choices=[m.value for m in BinaryPolicy], help="baseline images policy"
    )
    p.add_argument(
        "--default-javascript",
        choices=[m.value for m in BinaryPolicy],
        help="baseline javascript policy",
    )
    p.add_argument(
        "--default-popups", choices=[m.value for m in BinaryPolicy], help="baseline popups policy"
    )
    p.add_argument(
        "--default-notifications",
        choices=[m.value for m in NotificationPolicy],
        help="baseline notifications policy",
    )
    p.add_argument("--ui-dir", default=None, help="directory of built console assets")
    p.add_argument("--console-origin", default=None, help="CORS origin allowed on the control API")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def _baseline_overrides(args) -> dict:
    overrides = {}
    if args.default_cookies:
        overrides["cookies"] = CookiePolicy(args.default_cookies)
    if args.default_images:
        overrides["images"] = BinaryPolicy(args.default_images)
    if args.default_javascript:
        overrides["javascript"] = BinaryPolicy(args.default_javascript)
    if args.default_popups:
        overrides["popups"] = BinaryPolicy(args.default_popups)
    if args.default_notifications:
        overrides["notifications"] = NotificationPolicy(args.default_notifications)
    return overrides


def load_or_create_store(rules_path: str, overrides: dict) -> RuleStore:
    if os.path.exists(rules_path):
        store = RuleStore.load(rules_path)
    else:
        store = RuleStore(BASELINE_DEFAULT)
    if overrides:
        store.default = replace(store.default, **overrides)
    if not os.path.exists(rules_path):
        store.save(rules_path)
    return store


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    config = ServerConfig(
        proxy_listen=args.listen,
        control_listen=args.control_listen,
        rules_path=args.rules_file,
        log_capacity=args.log_capacity,
        ui_dir=args.ui_dir,
        console_origin=args.console_origin,
    )
    try:
        config.validate()
    except ValueError as e:
        print(f"filterplus: {e}", file=sys.stderr)
        return 2

    try:
        store = load_or_create_store(config.rules_path, _baseline_overrides(args))
    except RuleFileError as e:
        print(f"filterplus: {config.rules_path}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"filterplus: cannot use rules file {config.rules_path}: {e}", file=sys.stderr)
        return 1

    events = EventLog(config.log_capacity)
    try:
        proxy = FilterProxyServer(parse_listen(config.proxy_listen), store, events)
    except OSError as e:
        print(f"filterplus: cannot bind proxy listener {config.proxy_listen}: {e}", file=sys.stderr)
        return 1
    try:
        control = ControlServer(
            parse_listen(config.control_listen),
            store,
            events,
            config.rules_path,
            ui_dir=config.ui_dir,
            console_origin=config.console_origin,
        )
    except OSError as e:
        proxy.server_close()
        print(
            f"filterplus: cannot bind control listener {config.control_listen}: {e}",
            file=sys.stderr,
        )
        return 1

    logger.info("proxy listening on %s:%d", *proxy.server_address[:2])
    logger.info("control API listening on %s:%d", *control.server_address[:2])

    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)

    threads = [
        threading.Thread(target=proxy.serve_forever, daemon=True),
        threading.Thread(target=control.serve_forever, daemon=True),
    ]
    for t in threads:
        t.start()
    try:
        while not stop.wait(0.5):
            pass
    finally:
        proxy.shutdown()
        control.shutdown()
        proxy.server_close()
        control.server_close()
        try:
            store.save(config.rules_path)
        except OSError as e:
            logger.error("could not persist rules on shutdown: %s", e)
        logger.info("shut down; rules persisted to %s", config.rules_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
