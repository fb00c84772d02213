import sys

from dxhoglib.cli import main

sys.exit(main())
