import sys

from src.minirace.cli import main


if __name__ == "__main__":
    sys.exit(main())
