import sys

from dotenv import load_dotenv

from src.cli import run

load_dotenv()


if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
