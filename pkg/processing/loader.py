"""
This file is responsible for loading subset programs from a corpus directory
It reads the `// expect:` header that records each file's ground truth
"""

import os
import re
from typing import NamedTuple

from utils import get_corpus_path


EXPECTATIONS = ("race", "no-race", "unknown", "unsupported", "unverified")

_HEADER = re.compile(r"^\s*//\s*expect:\s*([a-z-]+)\s*$")


class CorpusEntry(NamedTuple):
    name: str
    path: str
    expected: str | None
    text: str


class CorpusLoader:

    def __init__(self, directory: str | None = None, sequential: bool | None = None):
        """
        Initializes CorpusLoader for reading the programs of a corpus directory

        Parameters:
            directory (str): folder holding .c files. None defaults to the bundled corpus
            sequential (bool): True keeps only seq_*.c files, False drops them, None keeps all
        """
        self.directory = directory if directory is not None else get_corpus_path()
        self.sequential = sequential

    def files(self):
        """
        Lists the .c files of the corpus, sorted by name

        Returns:
            a list of absolute paths
        """
        if not os.path.isdir(self.directory):
            return []
        names = sorted(n for n in os.listdir(self.directory) if n.endswith(".c"))
        if self.sequential is not None:
            names = [n for n in names if n.startswith("seq_") == self.sequential]
        return [os.path.join(self.directory, n) for n in names]

    @staticmethod
    def expectation(text: str):
        """
        Reads the expected verdict from the first line of a program

        Returns:
            one of EXPECTATIONS, or None without a header
        """
        first = text.split("\n", 1)[0]
        match = _HEADER.match(first)
        if match is None or match.group(1) not in EXPECTATIONS:
            return None
        return match.group(1)

    def load(self, path: str) -> CorpusEntry:
        with open(path) as f:
            text = f.read()
        return CorpusEntry(os.path.basename(path), path, self.expectation(text), text)

    def __iter__(self):
        for path in self.files():
            yield self.load(path)

    def __len__(self):
        return len(self.files())
