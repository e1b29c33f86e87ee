import sys

from muonbp.cli import main

sys.exit(main())
