import sys

from duio.cli import main

sys.exit(main())
