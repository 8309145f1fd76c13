"""Run the command line with ``python -m weylconn``."""

from weylconn.cli import main

raise SystemExit(main())
