import pytest

from popcon.verify import VerificationSuite


@pytest.fixture(scope="session")
def suite():
    """One verification suite per session; heavy artifacts are cached."""
    return VerificationSuite()
