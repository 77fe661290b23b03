import sys

from zal.cli import main

sys.exit(main())
