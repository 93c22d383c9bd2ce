import sys

from sparseport.cli import main

sys.exit(main())
