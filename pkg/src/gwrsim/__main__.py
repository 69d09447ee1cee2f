import sys

from gwrsim.cli import main

sys.exit(main())
