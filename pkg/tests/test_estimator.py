import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import plane_cloud
from pcinpaint import HoleFiller
from pcinpaint.exceptions import DuplicatePoints
from pcinpaint.holes import HoleSpec, punch_hole


def _holed():
    pts = plane_cloud(32)
    spec = HoleSpec(box_min=[12.5, 12.5, -1], box_max=[18.5, 18.5, 1])
    holed, region, _ = punch_hole(pts, spec)
    return pts, holed, spec, region


def test_params_roundtrip():
    est = HoleFiller(variant="base", lam=2.0)
    params = est.get_params()
    assert params["variant"] == "base" and params["lam"] == 2.0
    est.set_params(lam=3.0, stride=4)
    assert est.lam == 3.0 and est.stride == 4
    twin = clone(est)
    assert twin.get_params() == est.get_params()


@pytest.mark.parametrize("form", ["spec", "dict", "pair", "region"])
def test_hole_forms_agree(form):
    _, holed, spec, region = _holed()
    hole = {"spec": spec, "dict": spec.to_dict(), "pair": (spec.box_min, spec.box_max),
            "region": region}[form]
    est = HoleFiller(hole=hole, variant="base", stride=4, icp_restarts=False)
    out = est.fit_transform(holed)
    assert out.shape[0] > holed.shape[0]
    assert np.array_equal(out[: len(holed)], holed)
    assert est.report_.points_transferred == out.shape[0] - holed.shape[0]
    assert len(est.hole_region_) == len(region)
    assert est.voxel_edge_ > 0 and est.n_features_in_ == 3


def test_validation():
    _, holed, spec, _ = _holed()
    with pytest.raises(NotFittedError):
        HoleFiller(hole=spec).transform(holed)
    with pytest.raises(ValueError):
        HoleFiller().fit(holed)
    with pytest.raises(ValueError):
        HoleFiller(hole=spec).fit(holed[:, :2])
    with pytest.raises(ValueError):
        HoleFiller(hole=spec, lam=-1).fit(holed)
    with pytest.raises(ValueError):
        HoleFiller(hole=spec, nrt_units="feet").fit(holed)
    with pytest.raises(DuplicatePoints):
        HoleFiller(hole=spec).fit(np.vstack([holed, holed[:1]]))
    with pytest.raises(ValueError):
        HoleFiller(hole=spec).fit(np.array([[0, 0, np.nan], [1, 1, 1]]))
