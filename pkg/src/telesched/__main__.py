import sys

from telesched.cli import main

sys.exit(main())
