"""Launch a small live session service for the frontend test suite.

Usage: python3 test_service.py PORT
Prints "READY" on stdout once the server is accepting connections.
"""

import sys
import threading

import uvicorn

from prefspace.behaviors import GeneratorConfig, generate_database
from prefspace.exploration import simulate_population
from prefspace.service import create_app


def main() -> None:
    port = int(sys.argv[1])
    db = generate_database("visual", config=GeneratorConfig(n=120, seed=0))
    _, pages = simulate_population(db, n_users=4, pages_per_user=3,
                                   page_size=40, base_seed=1)
    app = create_app(db, population_pages=pages, seed=0)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="warning"))

    def announce():
        import time
        while not server.started:
            time.sleep(0.05)
        print("READY", flush=True)

    threading.Thread(target=announce, daemon=True).start()
    server.run()


if __name__ == "__main__":
    main()
