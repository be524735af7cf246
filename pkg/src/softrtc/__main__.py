import sys

from softrtc.cli import main

sys.exit(main())
