import sys

from compound_laplace.cli import main

sys.exit(main())
