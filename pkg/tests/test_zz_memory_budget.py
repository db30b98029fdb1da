"""Runs last (file order): the whole session must have stayed inside a 1 GB memory budget."""

import pytest

from streamreg.bench import peak_rss_bytes


@pytest.mark.criterion(10)
def test_session_peak_rss_under_one_gigabyte():
    rss = peak_rss_bytes()
    if rss is None:
        pytest.skip("peak RSS is not reported on this platform")
    print(f"peak RSS {rss / 2**20:.1f} MiB")
    assert rss < 2**30
