"""Allow running as ``python -m mkidlab``."""

import sys

from mkidlab.cli import main

sys.exit(main())
