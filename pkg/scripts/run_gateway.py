#!/usr/bin/env python3
"""Run the gateway: python scripts/run_gateway.py [--config config.json]."""

import argparse

import uvicorn

from rcp.config import load_config
from rcp.gateway import Gateway


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config file")
    args = parser.parse_args()

    cfg = load_config(args.config)
    gateway = Gateway(cfg)
    uvicorn.run(
        gateway.app,
        host=cfg.host,
        port=cfg.port,
        ssl_certfile=cfg.tls_cert,
        ssl_keyfile=cfg.tls_key,
        log_level="info",
    )


if __name__ == "__main__":
    main()
