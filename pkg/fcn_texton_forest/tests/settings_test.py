#!/usr/bin/env python3
import configparser
import os
import sys

import numpy as np
import pytest

try:
    import fcn_texton_forest
except ImportError:
    sys.path.append(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__))))
    )

from fcn_texton_forest.lib.errors import ConfigurationError
from fcn_texton_forest.lib.settings import SegmentationSettings
from fcn_texton_forest.tests.common import SMALL_SETTINGS, small_settings


def test_minimal_settings_defaults():
    settings = SegmentationSettings(filedata=SegmentationSettings.MINIMAL_SETTINGS)
    assert settings.method == "fcn_texton_rf"
    assert settings.seed == 0
    assert settings.tail_fraction == 0.01
    assert settings.hist_bins == 256
    assert settings.texton_k == 16
    assert settings.texton_window == 5
    assert settings.roi_margin == 10
    assert settings.score_source == SegmentationSettings.SCORE_SOURCE_FCN
    assert len(settings.filter_bank()) == 120
    forest = settings.forest_config()
    assert (forest.n_trees, forest.max_depth, forest.k_attributes) == (50, 15, None)
    assert settings.postprocess_enabled


def test_default_file_matches_builtin_defaults():
    path = os.path.join(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__)))),
        "settings.ini.default",
    )
    if not os.path.isfile(path):
        pytest.skip("settings.ini.default ships with the source tree only")
    from_file = SegmentationSettings(filepath=path)
    builtin = SegmentationSettings(filedata=SegmentationSettings.MINIMAL_SETTINGS)
    assert from_file.to_canonical_string() == builtin.to_canonical_string()


def test_canonical_string_is_stable(tmp_path):
    settings = small_settings()
    text = settings.to_canonical_string()
    assert text.startswith("[fcn]\n")
    assert "seed=3\n" in text
    assert "thetas=0.0,90.0\n" in text
    path = tmp_path / "settings.ini"
    path.write_text(text)
    reloaded = SegmentationSettings(filepath=str(path))
    assert reloaded.to_canonical_string() == text
    shuffled = SegmentationSettings(filedata=SMALL_SETTINGS.replace("seed = 3", "seed=3"))
    assert shuffled.to_canonical_string() == text


def test_overrides():
    settings = small_settings(seed=7, method="fcn_rf", k_attributes=3)
    assert settings.seed == 7
    assert settings.method == "fcn_rf"
    assert settings.forest_config().k_attributes == 3
    assert settings.forest_config(seed=99).seed == 99
    assert small_settings().seed == 3
    with pytest.raises(ConfigurationError):
        small_settings(no_such_key=1)


def test_invalid_settings():
    with pytest.raises(ConfigurationError):
        SegmentationSettings()
    with pytest.raises(ConfigurationError):
        SegmentationSettings(filepath="a.ini", filedata="[general]")
    with pytest.raises(ConfigurationError):
        SegmentationSettings(filepath="/nonexistent/settings.ini")
    for broken in (
        "[general]\nmethod = svm\n",
        "[fcn]\nscore_source = magic\n",
        "[preprocess]\nhist_bins = 1\n",
        "[preprocess]\ntail_fraction = 0.7\n",
        "[texton]\nk = 0\n",
        "[fcn]\noracle_flip = 0.9\n",
        "[forest]\nn_trees = 0\n",
        "not an ini",
    ):
        with pytest.raises(ConfigurationError):
            SegmentationSettings(filedata=broken)
    assert issubclass(ConfigurationError, LookupError)


def test_getint_safe():
    parser = configparser.ConfigParser()
    parser.read_string("[a]\nempty =\nnumber = 12\nword = x\n")
    assert SegmentationSettings.getint_safe(parser, "a", "number") == 12
    assert SegmentationSettings.getint_safe(parser, "a", "empty", fallback=5) == 5
    assert SegmentationSettings.getint_safe(parser, "a", "missing", fallback=None) is None
    with pytest.raises(ValueError):
        SegmentationSettings.getint_safe(parser, "a", "word")


def test_filter_bank_from_degrees():
    bank = small_settings().filter_bank()
    assert len(bank) == 4
    assert np.isclose(bank.params[-1].theta, np.pi / 2)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
