"""Allow running as `python -m dissynth`."""

from dissynth.cli import main

main()
