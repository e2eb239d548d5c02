import sys

from qecstab.cli import main

sys.exit(main())
