import sys

from softshed.cli import main

sys.exit(main())
