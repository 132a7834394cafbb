from pathlib import Path


def pytest_ignore_collect(collection_path: Path, config):
    # datalad's pytest plugin answers False for every directory, which
    # pre-empts pytest's own handling of --ignore; re-apply it here
    for ignored in config.getoption("ignore") or []:
        ignored = Path(ignored).absolute()
        if collection_path == ignored or ignored in collection_path.parents:
            return True
    return None
