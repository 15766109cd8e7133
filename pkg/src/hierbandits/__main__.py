import sys

from hierbandits.harness.cli import main

sys.exit(main())
