import sys

from opsim.cli import main

sys.exit(main())
