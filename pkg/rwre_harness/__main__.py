import sys

from rwre_harness.cli import main

sys.exit(main())
