import sys

from tardis.cli import main

sys.exit(main())
