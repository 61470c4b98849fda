# main.py

import sys
from pathlib import Path

# Allow `python main.py ...` from a checkout without installing the package
sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from libs.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
