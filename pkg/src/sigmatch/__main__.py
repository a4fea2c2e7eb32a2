import sys

from sigmatch.cli import main

sys.exit(main())
