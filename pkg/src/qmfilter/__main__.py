from qmfilter.cli import main

raise SystemExit(main())
