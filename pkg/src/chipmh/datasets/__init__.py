from importlib import resources


def wdbc_path():
    """Filesystem path of the bundled ``wdbc.data`` file."""
    return str(resources.files(__name__).joinpath("wdbc.data"))
