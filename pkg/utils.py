import json
import os


def load_param_json(path: str | None = None):
    """
    Load the analysis parameters

    Parameters:
        path (str): a params.json file. None reads the bundled src/utilities/params.json

    Returns: Nested dictionaries of parameters from json file
    """
    with open(path or get_params_path()) as f:
        params = json.load(f)
    for section in ("analysis", "machine_models", "type_sizes"):
        if section not in params:
            raise KeyError(f"params file has no {section!r} section")
    return params


def get_root_path():
    """
    Returns the path to the root of the repo
    """
    return os.path.abspath(os.path.dirname(__file__))


def get_params_path():
    """
    Returns the path to the bundled params.json
    """
    return os.path.join(get_root_path(), 'src', 'utilities', 'params.json')


def get_corpus_path():
    """
    Returns the path to the bundled corpus of subset programs
    """
    return os.path.join(get_root_path(), 'data', 'corpus')
