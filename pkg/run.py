#!/usr/bin/env python3
"""
Startup script for GWCL
Adds project root to Python path and hands over to the CLI
"""
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from gwcl.cli import main

if __name__ == "__main__":
    sys.exit(main())
