"""Allow `python -m perceptrl` alongside the console script."""

import sys

from .cli import main

sys.exit(main())
