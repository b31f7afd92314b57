import sys

from vinselect.cli import main

sys.exit(main())
