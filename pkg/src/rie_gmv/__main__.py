"""Allow ``python -m rie_gmv``."""
import sys

from .cli import main

sys.exit(main())
