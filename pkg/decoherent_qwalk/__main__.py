"""Allow ``python -m decoherent_qwalk``."""

from .cli import main

raise SystemExit(main())
