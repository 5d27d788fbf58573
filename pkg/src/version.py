import re


__version__ = '0.3.0.dev0'

ARTIFACT_FORMAT = 1


def format_version(version: str) -> str:
    """Extracts only the x.y.z semantic version tag."""

    match = re.match(r'\d+\.\d+\.\d+', version)
    if match is None:
        raise ValueError(f'Incorrect version given "{version}".')
    return match.group(0)


def is_dev_version(version: str) -> bool:
    """Denotes if the given version is dev."""

    return 'dev' in version
