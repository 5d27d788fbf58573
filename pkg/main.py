import logging
import multiprocessing
import sys

from src.cli import main


logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


if __name__ == '__main__':
    multiprocessing.freeze_support()

    sys.exit(main())
