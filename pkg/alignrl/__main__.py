import sys

from alignrl.main import cli_main

sys.exit(cli_main())
