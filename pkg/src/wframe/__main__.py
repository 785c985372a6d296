"""Allow ``python -m wframe`` as an alias for the ``wframe`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
