import sys

from pyzerowait.cli import main

sys.exit(main())
