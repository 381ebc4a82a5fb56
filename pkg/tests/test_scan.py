import numpy as np
import pytest
import yaml

from spectrum_demod.lineshape import GYROMAGNETIC
from spectrum_demod.scan import (
    PGM_MAX,
    FieldImage,
    ScanConfig,
    export_image,
    image_to_table,
    read_image_csv,
    read_pgm16,
    run_scan,
    sidecar_path,
    wrap_mask,
)
from spectrum_demod.simulator import SweepConfig
from spectrum_demod.util import ConfigError, NoiseMode
from spectrum_demod.waveforms import FieldMap

BIAS = 2.75e-3


@pytest.fixture
def field_map():
    return FieldMap(extent=(1e-6, 1e-6), domain_size=0.3e-6, feature_size=0.1e-6, resolution=20e-9, seed=4)


@pytest.fixture
def biased_sweep():
    return SweepConfig(f_c=float(GYROMAGNETIC.to_frequency(BIAS)), delta_f_win=30e6, f_mod=1e3)


def _scan_config(**kwargs):
    options = dict(extent=(200e-9, 100e-9), pitch=20e-9, bias=BIAS, workers=1)
    options.update(kwargs)
    return ScanConfig(**options)


def test_scan_geometry():
    cfg = _scan_config()
    assert (cfg.n_x, cfg.n_y) == (10, 5)
    assert cfg.n_pixels == 50
    assert cfg.acquisition_time == pytest.approx(0.5)
    np.testing.assert_allclose(cfg.xs[:3], [0.0, 20e-9, 40e-9])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"t_int": 20e-3},
        {"pitch": 0.0},
        {"extent": (5e-9, 5e-9)},
        {"rate": -1.0},
    ],
)
def test_invalid_scan_config(kwargs):
    with pytest.raises(ConfigError):
        _scan_config(**kwargs)


@pytest.mark.parametrize("is_tracking", [False, True])
def test_noiseless_scan_recovers_map(bright_params, biased_sweep, periodic, field_map, is_tracking):
    cfg = _scan_config(is_tracking=is_tracking)
    image = run_scan(cfg, bright_params, biased_sweep, field_map, NoiseMode.NONE, periodic)
    assert image.shape == (5, 10)
    assert image.n_unlocked == 0
    np.testing.assert_allclose(image.b, image.b_true, atol=1e-9)
    expected = field_map.sample_grid(cfg.xs, cfg.ys) + BIAS
    np.testing.assert_allclose(image.b_true, expected)
    assert image.rms_error() < 1e-9


def test_shot_noise_scan_is_seeded(bright_params, biased_sweep, periodic, field_map):
    cfg = _scan_config(seed=5)
    first = run_scan(cfg, bright_params, biased_sweep, field_map, NoiseMode.SHOT, periodic)
    second = run_scan(cfg, bright_params, biased_sweep, field_map, NoiseMode.SHOT, periodic)
    np.testing.assert_array_equal(first.b, second.b)
    assert first.rms_error() == pytest.approx(np.median(first.db), rel=0.5)


def test_wrap_mask(bright_params, biased_sweep, field_map):
    image = run_scan(_scan_config(), bright_params, biased_sweep, field_map, NoiseMode.NONE)
    assert not np.any(wrap_mask(image, biased_sweep, BIAS))
    assert np.all(wrap_mask(image, biased_sweep, BIAS + 1e-3))
    image.b_true = None
    with pytest.raises(ConfigError):
        wrap_mask(image, biased_sweep, BIAS)


@pytest.fixture
def ramp_image():
    cfg = _scan_config()
    b = np.linspace(0.0, 1e-4, cfg.n_pixels).reshape(cfg.n_y, cfg.n_x)
    lock = np.ones(b.shape, dtype=bool)
    lock[0, 0] = False
    return FieldImage(b=b, db=np.full(b.shape, 1e-7), lock=lock, config=cfg)


def test_csv_export_round_trip(tmp_path, ramp_image):
    fpath = export_image(ramp_image, tmp_path / "scan.csv", "csv")
    assert len(image_to_table(ramp_image)) == 50
    image = read_image_csv(fpath)
    np.testing.assert_allclose(image.b, ramp_image.b)
    np.testing.assert_array_equal(image.lock, ramp_image.lock)
    assert image.config == ramp_image.config


def test_pgm16_export(tmp_path, ramp_image):
    fpath = export_image(ramp_image, tmp_path / "scan.pgm", "pgm16")
    pixels = read_pgm16(fpath)
    assert pixels.shape == (5, 10)
    assert pixels[0, 0] == 0
    assert pixels[-1, -1] == PGM_MAX
    assert pixels[0, 1] == 0
    with open(sidecar_path(fpath)) as stream:
        meta = yaml.safe_load(stream)
    assert meta["width"] == 10
    assert meta["unlocked_pixels"] == 1
    assert meta["b_min_T"] == pytest.approx(ramp_image.b[0, 1])
    assert not meta["degenerate_range"]


def test_flat_image_is_mid_grey(tmp_path):
    cfg = _scan_config()
    shape = (cfg.n_y, cfg.n_x)
    image = FieldImage(b=np.full(shape, 1e-3), db=np.zeros(shape), lock=np.ones(shape, bool), config=cfg)
    fpath = export_image(image, tmp_path / "flat.pgm", "pgm16")
    assert np.all(read_pgm16(fpath) == 32768)
    with open(sidecar_path(fpath)) as stream:
        assert yaml.safe_load(stream)["degenerate_range"]


def test_png_export(tmp_path, ramp_image):
    fpath = export_image(ramp_image, tmp_path / "scan.png", "png")
    assert fpath.exists()
    assert sidecar_path(fpath).exists()


def test_unknown_format(tmp_path, ramp_image):
    with pytest.raises(ConfigError):
        export_image(ramp_image, tmp_path / "scan.tif", "tiff")


def test_image_shape_is_checked():
    cfg = _scan_config()
    with pytest.raises(AssertionError):
        FieldImage(b=np.zeros((3, 3)), db=np.zeros((5, 10)), lock=np.ones((5, 10), bool), config=cfg)
