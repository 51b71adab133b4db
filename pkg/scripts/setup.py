#!/usr/bin/env python3
"""
Setup script for GWCL
Creates the virtual environment, installs requirements and prepares the
data / output directories
"""
import os
import subprocess
import sys
from pathlib import Path


def print_header(text):
    """Print a formatted header"""
    print("\n" + "=" * 60)
    print(f"  {text}")
    print("=" * 60 + "\n")


def run_command(cmd, description=""):
    """Run a command and report failures"""
    if description:
        print(f"-> {description}")
    try:
        result = subprocess.run(cmd, check=True, capture_output=True, text=True, encoding="utf-8", errors="replace")
        if result.stdout:
            print(result.stdout)
        return True
    except subprocess.CalledProcessError as e:
        print(f"[ERROR] {' '.join(cmd)} failed with status {e.returncode}")
        if e.stderr:
            print(e.stderr)
        return False


def venv_python():
    return Path("venv") / ("Scripts/python.exe" if os.name == "nt" else "bin/python")


def check_python_version():
    print_header("Checking Python Version")
    version = sys.version_info
    print(f"Python {version.major}.{version.minor}.{version.micro}")
    if version < (3, 10):
        print("[ERROR] Python 3.10+ is required")
        return False
    print("[OK] Python version is compatible")
    return True


def setup_virtual_environment():
    print_header("Setting Up Virtual Environment")
    if Path("venv").exists():
        print("[OK] Virtual environment already exists")
        return True
    if not run_command([sys.executable, "-m", "venv", "venv"], "Creating virtual environment"):
        return False
    print("[OK] Virtual environment created")
    print("\nTo activate:")
    print("  Windows: venv\\Scripts\\activate")
    print("  Linux/Mac: source venv/bin/activate")
    return True


def install_dependencies():
    print_header("Installing Dependencies")
    python = str(venv_python())
    if not run_command([python, "-m", "pip", "install", "--upgrade", "pip"], "Upgrading pip"):
        return False
    if not run_command([python, "-m", "pip", "install", "-r", "requirements.txt"], "Installing requirements"):
        return False
    print("[OK] Dependencies installed")
    return True


def check_faiss():
    """faiss is only needed for --knn-backend faiss"""
    print_header("Checking K-NN Backends")
    ok = run_command([str(venv_python()), "-c", "import faiss"], "Importing faiss")
    if ok:
        print("[OK] brute, kdtree and faiss backends available")
    else:
        print("[WARNING] faiss not importable; use --knn-backend brute or kdtree")
    return True


def setup_environment_file():
    print_header("Setting Up Environment File")
    env_path = Path(".env")
    template_path = Path(".env.template")
    if env_path.exists():
        print("[OK] .env file already exists")
        return True
    if not template_path.exists():
        print("[ERROR] .env.template not found")
        return False
    env_path.write_text(template_path.read_text(encoding="utf-8"), encoding="utf-8")
    print("[OK] Created .env file")
    return True


def create_directories():
    print_header("Creating Directories")
    for directory in ("data/indian_pines", "data/salinas", "data/pavia_university", "output/cache"):
        Path(directory).mkdir(parents=True, exist_ok=True)
        print(f"[OK] Created: {directory}")
    return True


def show_next_steps():
    print_header("Setup Complete!")
    print("Next steps:")
    print("\n1. Convert the public .mat files into data/<scene>/:")
    print("   python scripts/manage_data.py convert Indian_pines_corrected.mat --data-dir data/indian_pines")
    print("   python scripts/manage_data.py convert Indian_pines_gt.mat --kind labels --data-dir data/indian_pines")
    print("\n2. Check the dataset:")
    print("   python run.py ingest --cube data/indian_pines/indian_pines_corrected "
          "--labels data/indian_pines/indian_pines_gt")
    print("\n3. Run the experiment:")
    print("   python run.py run-experiment --preset indian_pines --out output/indian_pines")
    print("\n" + "=" * 60 + "\n")


def main():
    print("\nGWCL Setup Script\n")
    os.chdir(Path(__file__).parent.parent)

    steps = [
        ("Python Version", check_python_version),
        ("Virtual Environment", setup_virtual_environment),
        ("Dependencies", install_dependencies),
        ("K-NN Backends", check_faiss),
        ("Environment File", setup_environment_file),
        ("Directories", create_directories),
    ]
    failed_steps = []
    for step_name, step_func in steps:
        try:
            if not step_func():
                failed_steps.append(step_name)
        except Exception as e:
            print(f"[ERROR] Unexpected error in {step_name}: {e}")
            failed_steps.append(step_name)

    if failed_steps:
        print("\n[WARNING] Setup completed with issues in:")
        for step in failed_steps:
            print(f"  - {step}")
        return 1
    show_next_steps()
    return 0


if __name__ == "__main__":
    sys.exit(main())
