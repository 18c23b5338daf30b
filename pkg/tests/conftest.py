import pytest

from ego3d.sim import SceneConfig, generate_scene


@pytest.fixture(scope="session")
def default_scene():
    """Three subjects, eight static cameras, 10 s at 20 fps."""
    return generate_scene(SceneConfig())


def pytest_terminal_summary(terminalreporter):
    from _support import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
