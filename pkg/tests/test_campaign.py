"""Tests for the parallel campaign helpers"""

import pytest

from campaign import run_pair, run_parallel


class TestRunParallel:
    def test_order_preserved(self):
        assert run_parallel(lambda k: k * k, [3, 1, 2], workers=3) == [9, 1, 4]

    def test_serial_path(self):
        assert run_parallel(str, [1, 2], workers=1) == ['1', '2']

    def test_exception_propagates(self):
        def fail(k):
            if k == 2:
                raise ValueError("item 2")
            return k

        with pytest.raises(ValueError, match="item 2"):
            run_parallel(fail, [1, 2, 3], workers=2)


class TestRunPair:
    def test_results_in_order(self):
        assert run_pair(lambda: 'first', lambda: 'second') == ('first', 'second')
