"""
Unit tests for the reproducible random streams
"""

import numpy as np
import pytest

from rmtlab.rng import derive_seed, map_samples, seed_path, seed_stream


class TestSeedStream:
    """Tests for seed_stream"""

    def test_same_key_same_stream(self) -> None:
        """Identical keys reproduce the draws"""
        a = seed_stream(11, 3, "entries").standard_normal(50)
        b = seed_stream(11, 3, "entries").standard_normal(50)
        assert np.array_equal(a, b), "Streams with identical keys differ"

    def test_keys_are_independent(self) -> None:
        """Changing any key component changes the stream"""
        base = seed_stream(11, 3, "entries").random(8)
        for other in (
            seed_stream(12, 3, "entries"),
            seed_stream(11, 4, "entries"),
            seed_stream(11, 3, "proposal"),
        ):
            assert not np.array_equal(base, other.random(8)), "Distinct keys collided"

    def test_negative_seed(self) -> None:
        """Negative master seeds are rejected"""
        with pytest.raises(ValueError, match="master_seed must be non-negative"):
            seed_stream(-1, 0, "entries")

    def test_negative_index(self) -> None:
        """Negative sample indices are rejected"""
        with pytest.raises(ValueError, match="sample_index must be non-negative"):
            seed_stream(0, -2, "entries")

    def test_seed_path_format(self) -> None:
        assert seed_path(5, 2, "entries") == "5/2/entries"

    def test_derived_seeds_of_neighbouring_masters_differ(self) -> None:
        first = [derive_seed(5, r, "compare/repeat") for r in range(10)]
        second = [derive_seed(6, r, "compare/repeat") for r in range(10)]
        assert first == [derive_seed(5, r, "compare/repeat") for r in range(10)]
        assert not set(first) & set(second)
        assert len(set(first)) == 10 and min(first + second) >= 0


class TestMapSamples:
    """Tests for map_samples"""

    def test_thread_count_invariance(self) -> None:
        """Results do not depend on the number of worker threads"""

        def draw(k: int) -> float:
            return float(seed_stream(99, k, "x").standard_normal())

        serial = map_samples(draw, 20, threads=1)
        parallel = map_samples(draw, 20, threads=4)
        assert serial == parallel, "Parallel evaluation changed the results"

    def test_rejects_zero_threads(self) -> None:
        with pytest.raises(ValueError, match="threads must be at least 1"):
            map_samples(lambda k: k, 3, threads=0)
