"""
tapermle: __main__.py
"""

from tapermle.cli import main

if __name__ == "__main__":
    main()
