import sys

from patternsearch.cli import main

sys.exit(main())
