import dataclasses
import math

import numpy as np
import pytest

from natwalk import biomech
from natwalk.biomech import (
    ModelError,
    SimState,
    SimulationDiverged,
    joint_limit_torque,
    load_model,
    model_from_dict,
    reset,
    step,
)
from natwalk.terrain import sloped_tiles

G = 9.81


@pytest.fixture(scope="module")
def model():
    return load_model()


def pendulum_doc(n_links=2, gravity=G):
    segs, joints = [], []
    parent = "world"
    for k in range(n_links):
        name = f"link{k}"
        segs.append({"name": name, "mass": 1.0, "inertia": 1.0 / 12 * 0.5**2, "length": 0.5,
                     "com": [0.0, -0.25]})
        joints.append({"name": f"j{k}", "parent": parent, "child": name,
                       "origin": [0.0, 0.0] if k == 0 else [0.0, -0.5]})
        parent = name
    return {"schema": biomech.SCHEMA_ID, "name": "pendulum", "gravity": gravity,
            "segments": segs, "joints": joints}


def free_body_doc(gravity=G):
    return {"schema": biomech.SCHEMA_ID, "name": "free", "gravity": gravity,
            "segments": [{"name": "b", "mass": 2.0, "inertia": 0.1, "length": 0.3,
                          "com": [0.05, 0.0]}],
            "joints": [{"name": "root", "type": "planar", "parent": "world", "child": "b",
                        "dofs": ["x", "y", "rz"]}]}


class TestLoadModel:
    def test_default_dimensions(self, model):
        assert model.n_dof == 9
        assert model.n_muscles == 18
        assert model.dof_names[:3] == ("pelvis_tx", "pelvis_ty", "pelvis_tilt")
        assert set(model.feet) == {"left", "right"}

    def test_body_weight(self, model):
        assert model.body_weight == pytest.approx(G * sum(s.mass for s in model.segments))
        assert model.total_mass == pytest.approx(75.0, rel=0.01)

    def test_from_path(self, tmp_path):
        import importlib.resources

        text = (importlib.resources.files("natwalk") / "data" / biomech.DEFAULT_MODEL).read_text()
        path = tmp_path / "m.toml"
        path.write_text(text)
        assert load_model(path).n_dof == 9

    def _default_doc(self):
        import importlib.resources

        import tomli

        text = (importlib.resources.files("natwalk") / "data" / biomech.DEFAULT_MODEL).read_text()
        return tomli.loads(text)

    def test_zero_mass_rejected(self):
        doc = self._default_doc()
        doc["segments"][1]["mass"] = 0.0
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_inverted_limits_rejected(self):
        doc = self._default_doc()
        j = next(j for j in doc["joints"] if "limits" in j)
        j["limits"] = [j["limits"][1], j["limits"][0]]
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_dangling_reference(self):
        doc = self._default_doc()
        doc["joints"][1]["parent"] = "nowhere"
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_cycle_rejected(self):
        doc = pendulum_doc(2)
        doc["joints"][0]["parent"] = "link1"
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_wrong_schema(self):
        doc = pendulum_doc()
        doc["schema"] = "other/9"
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("segments = [[[")
        with pytest.raises(ModelError):
            load_model(path)


class TestStep:
    def test_free_fall(self):
        m = model_from_dict(free_body_doc())
        s = SimState([0.0, 5.0, 0.0], [0.0, 0.0, 0.0], [])
        s2, rep = step(m, s, np.zeros(0), 1e-4)
        assert s2.qd[1] == pytest.approx(-G * 1e-4, rel=1e-12)
        assert s2.t == pytest.approx(1e-4)
        assert np.all(rep.grf_per_foot >= 0)

    def test_deterministic(self, model):
        s = reset(model, 3)
        u = np.full(model.n_muscles, 0.3)
        a, ra = step(model, s, u, 1e-4, None, 200)
        b, rb = step(model, s, u, 1e-4, None, 200)
        assert a == b
        assert np.array_equal(ra.grf_per_foot, rb.grf_per_foot)
        assert np.array_equal(ra.joint_limit_torques, rb.joint_limit_torques)

    def test_input_state_untouched(self, model):
        s = reset(model, 1)
        q0 = s.q.copy()
        step(model, s, np.zeros(model.n_muscles), 1e-4, None, 10)
        assert np.array_equal(s.q, q0)

    def test_time_monotone(self, model):
        s = reset(model, 0)
        for _ in range(5):
            s2, _ = step(model, s, np.zeros(model.n_muscles), 1e-4, None, 100)
            assert s2.t > s.t
            s = s2

    @pytest.mark.parametrize("bad", [-0.1, 1.1, np.nan])
    def test_excitation_range(self, model, bad):
        u = np.zeros(model.n_muscles)
        u[0] = bad
        with pytest.raises(ValueError):
            step(model, reset(model, 0), u, 1e-4)

    def test_bad_dt(self, model):
        with pytest.raises(ValueError):
            step(model, reset(model, 0), np.zeros(model.n_muscles), 0.0)

    def test_wrong_excitation_count(self, model):
        with pytest.raises(ValueError):
            step(model, reset(model, 0), np.zeros(3), 1e-4)

    def test_divergence_raises(self):
        m = model_from_dict(free_body_doc())
        s = SimState([0.0, 0.0, 0.0], [0.0, 0.0, 1e4], [])
        with pytest.raises(SimulationDiverged):
            step(m, s, np.zeros(0), 1e-4)

    def test_report_shapes_and_signs(self, model):
        s = reset(model, 5)
        _, rep = step(model, s, np.full(model.n_muscles, 0.5), 1e-4, sloped_tiles(5), 500)
        assert rep.grf_per_foot.shape == (len(model.feet),)
        assert rep.joint_limit_torques.shape == (len(model.limited_joints),)
        values = np.concatenate([rep.grf_per_foot, rep.joint_limit_torques,
                                 [rep.self_collision_force]])
        assert np.all(np.isfinite(values)) and np.all(values >= 0)

    def test_standing_support(self, model):
        # the stance bounces on the contact springs; on average the feet carry
        # body weight split evenly
        q = np.zeros(model.n_dof)
        clear = biomech.foot_clearance(model, q)
        q[1] -= min(clear.values())
        s = SimState(q, np.zeros(model.n_dof), np.zeros(model.n_muscles))
        grf = []
        for _ in range(50):
            s, rep = step(model, s, np.zeros(model.n_muscles), 1e-4, None, 20)
            grf.append(rep.grf_per_foot)
        grf = np.array(grf)
        assert grf.sum(axis=1).mean() == pytest.approx(model.body_weight, rel=0.1)
        np.testing.assert_allclose(grf[:, 0], grf[:, 1], rtol=1e-6)


class TestConservation:
    def test_double_pendulum_energy(self):
        m = model_from_dict(pendulum_doc(2))
        s = SimState([1.2, -0.5], [0.0, 0.0], [])
        e0 = biomech.mechanical_energy(m, s)
        energies = []
        for _ in range(100):
            s, _ = step(m, s, np.zeros(0), 1e-4, None, 1000)
            energies.append(biomech.mechanical_energy(m, s))
        assert s.t == pytest.approx(10.0)
        scale = abs(e0 - biomech.mechanical_energy(m, SimState([0.0, 0.0], [0.0, 0.0], [])))
        drift = max(abs(e - e0) for e in energies)
        assert drift < 0.01 * scale

    def test_momentum_without_gravity(self):
        m = model_from_dict(free_body_doc(gravity=0.0))
        s = SimState([0.0, 1.0, 0.0], [0.3, -0.2, 4.0], [])
        p0 = biomech.linear_momentum(m, s)
        s, _ = step(m, s, np.zeros(0), 1e-4, None, 20000)
        np.testing.assert_allclose(biomech.linear_momentum(m, s), p0, atol=1e-3 * np.linalg.norm(p0))

    def test_momentum_error_is_first_order(self):
        m = model_from_dict(free_body_doc(gravity=0.0))
        errors = []
        for dt in (1e-4, 5e-5):
            s = SimState([0.0, 1.0, 0.0], [0.3, -0.2, 4.0], [])
            p0 = biomech.linear_momentum(m, s)
            s, _ = step(m, s, np.zeros(0), dt, None, int(round(1.0 / dt)))
            errors.append(np.linalg.norm(biomech.linear_momentum(m, s) - p0))
        assert errors[1] == pytest.approx(errors[0] / 2, rel=0.05)

    def test_chain_momentum_without_gravity(self):
        doc = free_body_doc(gravity=0.0)
        doc["segments"].append({"name": "arm", "mass": 1.0, "inertia": 0.02, "length": 0.4,
                                "com": [0.0, -0.2]})
        doc["joints"].append({"name": "elbow", "parent": "b", "child": "arm"})
        m = model_from_dict(doc)
        s = SimState([0.0, 1.0, 0.0, 0.4], [0.5, 0.1, -1.0, 3.0], [])
        p0 = biomech.linear_momentum(m, s)
        s, _ = step(m, s, np.zeros(0), 1e-4, None, 20000)
        np.testing.assert_allclose(biomech.linear_momentum(m, s), p0, atol=1e-3 * np.linalg.norm(p0))


class TestJointLimit:
    @pytest.fixture
    def joint(self):
        return biomech.Joint(name="knee", parent="thigh", child="shank", limits=(-2.4, 0.0),
                             limit_stiffness=50.0, limit_damping=2.0)

    def test_inside(self, joint):
        assert joint_limit_torque(-1.2, 3.0, joint) == 0.0

    def test_spring(self, joint):
        assert joint_limit_torque(0.1, 0.0, joint) == pytest.approx(-5.0, rel=1e-12)

    def test_symmetric(self, joint):
        assert joint_limit_torque(-2.5, 0.0, joint) == pytest.approx(5.0, rel=1e-12)

    def test_damping_never_reverses(self, joint):
        # moving back inside fast: damping may cancel but not flip the spring
        assert joint_limit_torque(0.01, -10.0, joint) == 0.0
        assert joint_limit_torque(0.1, 1.0, joint) == pytest.approx(-7.0)

    def test_requires_limits(self):
        with pytest.raises(ValueError):
            joint_limit_torque(0.0, 0.0, biomech.Joint(name="j", parent="a", child="b"))


class TestReset:
    def test_seeds_differ(self, model):
        assert reset(model, 0) != reset(model, 1)

    def test_same_seed(self, model):
        assert reset(model, 42) == reset(model, 42)

    @pytest.mark.parametrize("seed", range(25))
    def test_one_foot_elevated(self, model, seed):
        s = reset(model, seed)
        clear = sorted(biomech.foot_clearance(model, s.q).values())
        assert clear[0] == pytest.approx(0.0, abs=1e-9)
        assert clear[1] >= biomech.ELEVATION_MIN
        assert s.t == 0.0
        assert np.all(s.a == 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_rough_terrain(self, model, seed):
        t = sloped_tiles(seed)
        s = reset(model, seed, t)
        clear = sorted(biomech.foot_clearance(model, s.q, t).values())
        assert clear[0] >= -1e-9
        assert clear[1] >= biomech.ELEVATION_MIN

    def test_standing_height(self, model):
        s = reset(model, 0)
        assert s.q[1] == pytest.approx(0.954, abs=0.03)


def test_simstate_validation():
    with pytest.raises(ValueError):
        SimState([0.0], [0.0, 1.0], [])
    with pytest.raises(ValueError):
        SimState([0.0], [0.0], [1.5])
    s = SimState([0.0], [0.0], [])
    with pytest.raises(ValueError):
        s.q[0] = 1.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.t = 3.0
