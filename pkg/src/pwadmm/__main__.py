import sys

from pwadmm.cli import main

sys.exit(main())
