import sys

from dczip.cli import main

sys.exit(main())
