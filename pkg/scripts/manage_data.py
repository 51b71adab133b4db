#!/usr/bin/env python3
"""
Dataset and Cache Management Tool
List, convert and inspect datasets; clear the artifact cache
"""
import argparse
import shutil
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from gwcl.config import CACHE_DIR, DATA_DIR
from gwcl.services import raw_store
from gwcl.services.hsi_data import convert_mat


def list_datasets(data_dir=DATA_DIR):
    """List every raw + header pair in the data directory"""
    print("\n" + "=" * 60)
    print("  Datasets")
    print("=" * 60)

    data_path = Path(data_dir)
    headers = sorted(data_path.glob(f"*{raw_store.HEADER_SUFFIX}")) if data_path.exists() else []
    if not headers:
        print(f"\n[EMPTY] No datasets in {data_path}")
        return

    for header_file in headers:
        stem = raw_store.stem_of(header_file)
        header = raw_store.read_header(stem)
        raw_file = raw_store.raw_path(stem)
        size = raw_file.stat().st_size / (1024 * 1024) if raw_file.exists() else 0.0
        shape = f"{header.get('height', '?')}x{header.get('width', '?')}x{header.get('bands', '?')}"
        status = "" if raw_file.exists() else "  [MISSING RAW]"
        print(f"  {stem.name:<32}{shape:>16}  {header.get('dtype', '?'):<4}{size:>9.2f} MB{status}")
    print(f"\n[TOTAL] {len(headers)} datasets")


def convert(mat_files, data_dir=DATA_DIR, kind="cube", key=None):
    """Convert .mat files into the data directory"""
    print("\n" + "=" * 60)
    print("  Converting .mat Files")
    print("=" * 60)

    for mat in mat_files:
        mat_file = Path(mat)
        if not mat_file.exists():
            print(f"[ERROR] File not found: {mat}")
            continue
        out = Path(data_dir) / mat_file.stem.lower()
        print(f"\n[PROCESSING] {mat_file.name}")
        print(f"[OK] {convert_mat(mat_file, out, kind, key)}")


def clean_cache(cache_dir=CACHE_DIR, assume_yes=False):
    """Remove every cached feature matrix and graph"""
    cache_path = Path(cache_dir)
    if not cache_path.exists():
        print(f"\n[EMPTY] No cache at {cache_path}")
        return
    entries = [p for p in cache_path.iterdir() if p.is_dir()]
    print(f"\n[WARNING] This deletes {len(entries)} cached artifacts in {cache_path}")
    if not assume_yes and input("\nType 'DELETE' to confirm: ") != "DELETE":
        print("\n[CANCELLED] Operation cancelled")
        return
    for entry in entries:
        shutil.rmtree(entry)
        print(f"[DELETED] {entry.name}")
    print("\n[SUCCESS] Cache cleaned!")


def main():
    parser = argparse.ArgumentParser(
        description="Manage GWCL datasets and cached artifacts",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # List datasets
  python scripts/manage_data.py list

  # Convert the Indian Pines .mat pair
  python scripts/manage_data.py convert Indian_pines_corrected.mat --data-dir data/indian_pines
  python scripts/manage_data.py convert Indian_pines_gt.mat --kind labels --data-dir data/indian_pines

  # Drop cached features and graphs
  python scripts/manage_data.py clean-cache
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Command to run')

    list_parser = subparsers.add_parser('list', help='List datasets')
    list_parser.add_argument('--data-dir', default=str(DATA_DIR), help='Dataset directory')

    convert_parser = subparsers.add_parser('convert', help='Convert .mat files to raw + header')
    convert_parser.add_argument('mat_files', nargs='+', help='.mat files')
    convert_parser.add_argument('--kind', choices=('cube', 'labels'), default='cube')
    convert_parser.add_argument('--key', help='Variable name inside the .mat file')
    convert_parser.add_argument('--data-dir', default=str(DATA_DIR), help='Output directory')

    clean_parser = subparsers.add_parser('clean-cache', help='Remove cached features and graphs')
    clean_parser.add_argument('--cache-dir', default=str(CACHE_DIR), help='Cache directory')
    clean_parser.add_argument('--yes', action='store_true', help='Skip the confirmation prompt')

    args = parser.parse_args()

    if not args.command:
        parser.print_help()
        return

    try:
        if args.command == 'list':
            list_datasets(args.data_dir)

        elif args.command == 'convert':
            convert(args.mat_files, args.data_dir, args.kind, args.key)

        elif args.command == 'clean-cache':
            clean_cache(args.cache_dir, args.yes)

    except Exception as e:
        print(f"\n[ERROR] {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
