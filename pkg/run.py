import sys

from dotenv import load_dotenv

load_dotenv()

from bdmc.harness.cli import main  # noqa: E402

if __name__ == '__main__':
	sys.exit(main())
