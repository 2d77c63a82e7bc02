import sys

from isoprobe.cli import main

sys.exit(main())
