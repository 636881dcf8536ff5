"""Allow running as: python -m calderon_lab recover --config recover.yaml"""

import sys

from .cli import main

sys.exit(main())
