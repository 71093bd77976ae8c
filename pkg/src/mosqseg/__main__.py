import sys

from mosqseg.cli import main

sys.exit(main())
