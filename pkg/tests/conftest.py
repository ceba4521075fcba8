# Make the helper modules in this directory (world, wmc_oracle)
# importable no matter where pytest is invoked from.
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
