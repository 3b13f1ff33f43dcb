import sys

from csiris.cli import main

sys.exit(main())
