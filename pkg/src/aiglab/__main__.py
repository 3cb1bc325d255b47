import sys

from aiglab.cli import main

sys.exit(main())
