import sys

from hawkes_em.cli import main

sys.exit(main())
