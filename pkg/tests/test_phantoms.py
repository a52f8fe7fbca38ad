import numpy as np
import pytest

from diffsr.phantoms import PhantomSpec, generate_phantom, row_profile_peak_count


class TestFlat:
    def test_constant_value(self):
        img = generate_phantom(PhantomSpec("flat", 8, 8, value=0.5))
        assert np.all(img.data == 0.5)

    def test_rejects_out_of_range_value(self):
        with pytest.raises(ValueError):
            generate_phantom(PhantomSpec("flat", 8, 8, value=1.5))


class TestLayeredCornea:
    def test_deterministic_per_seed(self):
        a = generate_phantom(PhantomSpec("layered_cornea", 64, 64, seed=3))
        b = generate_phantom(PhantomSpec("layered_cornea", 64, 64, seed=3))
        assert np.array_equal(a.data, b.data)
        c = generate_phantom(PhantomSpec("layered_cornea", 64, 64, seed=4))
        assert not np.array_equal(a.data, c.data)

    def test_values_in_unit_range(self):
        img = generate_phantom(PhantomSpec("layered_cornea", 256, 256, seed=0))
        assert img.data.min() >= 0.0
        assert img.data.max() <= 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_at_least_two_arcs(self, seed):
        img = generate_phantom(PhantomSpec("layered_cornea", 256, 256, seed=seed))
        assert row_profile_peak_count(img) >= 2

    def test_bright_bands_over_dark_background(self):
        img = generate_phantom(PhantomSpec("layered_cornea", 128, 128, seed=1))
        profile = img.data.mean(axis=1)
        assert profile.max() > 3 * profile.min()


class TestGmmField:
    def test_deterministic_and_bounded(self):
        a = generate_phantom(PhantomSpec("gmm_field", 32, 32, seed=9))
        b = generate_phantom(PhantomSpec("gmm_field", 32, 32, seed=9))
        assert np.array_equal(a.data, b.data)
        assert a.data.min() >= 0.0 and a.data.max() <= 1.0


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PhantomSpec("checkerboard", 8, 8)

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            PhantomSpec("flat", 0, 8)
