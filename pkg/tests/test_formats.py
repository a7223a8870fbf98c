import math

import numpy as np
import pytest

from rfulm import formats
from rfulm.formats import FormatError
from rfulm.localizer import SrNetwork
from rfulm.transform import AffineMap


def test_rfb_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    fr = (rng.normal(size=(6, 5, 4)) + 1j * rng.normal(size=(6, 5, 4))).astype(np.complex64)
    formats.write_rfb(tmp_path / "x.rfb", fr, [-0.1, 0.0, 0.1])
    back, ang = formats.read_rfb(tmp_path / "x.rfb")
    np.testing.assert_array_equal(back, fr)
    np.testing.assert_allclose(ang, [-0.1, 0.0, 0.1], rtol=1e-7)
    formats.write_rfb(tmp_path / "e.rfb", np.zeros((0, 5, 4), complex), [0.0])
    assert formats.read_rfb(tmp_path / "e.rfb")[0].shape == (0, 5, 4)
    with pytest.raises(FormatError):
        formats.write_rfb(tmp_path / "b.rfb", fr[:5], [0.0, 1.0])


def test_bad_magic_version_and_truncation(tmp_path):
    formats.write_rfb(tmp_path / "x.rfb", np.ones((1, 2, 2), complex), [0.0])
    raw = (tmp_path / "x.rfb").read_bytes()
    (tmp_path / "m.rfb").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "v.rfb").write_bytes(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    (tmp_path / "t.rfb").write_bytes(raw[:-4])
    for name, msg in (("m", "not an RFB1"), ("v", "version"), ("t", "truncated")):
        with pytest.raises(FormatError, match=msg):
            formats.read_rfb(tmp_path / f"{name}.rfb")


def test_checkpoint_round_trip(tmp_path):
    net = SrNetwork((4, 6), R=2, seed=3)
    formats.write_checkpoint(tmp_path / "n.srn", net)
    back = formats.read_checkpoint(tmp_path / "n.srn")
    assert back.channels == net.channels and back.R == 2
    for p, q in zip(net.params, back.params):
        np.testing.assert_array_equal(p, q)
    raw = (tmp_path / "n.srn").read_bytes()
    (tmp_path / "bad.srn").write_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        formats.read_checkpoint(tmp_path / "bad.srn")
    (tmp_path / "bad.srn").write_bytes(b"RFB1" + raw[4:])
    with pytest.raises(FormatError):
        formats.read_checkpoint(tmp_path / "bad.srn")


def test_localizations_round_trip(tmp_path):
    rows = [(0, "bmode", math.nan, 1.25, 7.5, 1.0), (3, "rf", -5.0, 12.0, 40.5, 88.125)]
    formats.write_localizations(tmp_path / "l.csv", rows)
    back = formats.read_localizations(tmp_path / "l.csv")
    assert back[1] == rows[1] and math.isnan(back[0][2]) and back[0][3:] == rows[0][3:]
    assert len(formats.read_localizations(tmp_path / "l.csv", space="rf")) == 1
    g = formats.group_by_frame(back)
    assert sorted(g) == [0, 3] and g[3].shape == (1, 3)
    (tmp_path / "h.csv").write_text("a,b\n")
    with pytest.raises(FormatError):
        formats.read_localizations(tmp_path / "h.csv")


def test_affine_round_trip(tmp_path):
    m = AffineMap.from_coefficients([1.1, 0.2, -3.3, 0.01, 0.5, 7.0], tx_angle=math.radians(-5),
                                    fit_residual_rms=0.15)
    formats.write_affine_maps(tmp_path / "a.txt", [m])
    (b,) = formats.read_affine_maps(tmp_path / "a.txt")
    np.testing.assert_array_equal(b.coefficients, m.coefficients)
    assert b.tx_angle == pytest.approx(m.tx_angle, rel=1e-15)
    assert b.fit_residual_rms == 0.15


def test_canvas_and_loss_round_trip(tmp_path):
    c = np.arange(12).reshape(3, 4)
    formats.write_canvas(tmp_path / "c.ulc", c)
    np.testing.assert_array_equal(formats.read_canvas(tmp_path / "c.ulc"), c)
    h = [(0, 12.5, 1e-3), (1, 3.25, 5e-4)]
    formats.write_loss_csv(tmp_path / "l.csv", h)
    assert formats.read_loss_csv(tmp_path / "l.csv") == h
