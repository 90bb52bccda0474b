import sys

from npgroup.cli import main

sys.exit(main())
