import sys

from hitchin_sov.cli import main

sys.exit(main())
