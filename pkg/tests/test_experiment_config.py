"""Tests for loading and validating experiment documents."""

import copy

import numpy as np
import pytest
import yaml

from src.expr import evaluate
from src.parsers.experiment_config import ConfigError, UnresolvedReference, load_config

from conftest import EXAMPLE_CONFIGS


def _with(document, **changes):
    updated = copy.deepcopy(document)
    updated.update(changes)
    return updated


class TestMinimalDocument:
    def test_loads(self, write_config, minimal_document):
        config = load_config(write_config(minimal_document))
        assert list(config.systems) == ['A']
        assert config.systems['A'].order == 1
        assert config.solver.step == 1e-3
        assert config.domain == (0.0, 5.0)
        assert len(config.digest) == 64

        experiment = config.experiments[0]
        assert experiment.id == '01-theorem1'
        assert experiment.refs == {'system': 'A', 'gains': 'g'}
        assert experiment.objects['system'] is config.systems['A']
        assert config.experiment('01-theorem1') is experiment

    def test_unknown_experiment_id(self, write_config, minimal_document):
        config = load_config(write_config(minimal_document))
        with pytest.raises(UnresolvedReference):
            config.experiment('missing')

    def test_yaml_equivalent(self, write_config, minimal_document, tmp_path):
        path = tmp_path / "experiments.yaml"
        path.write_text(yaml.safe_dump(minimal_document))
        config = load_config(path)
        assert config.experiments[0].id == '01-theorem1'
        assert config.gains['g'].name == 'g'

    def test_step_override(self, write_config, minimal_document):
        config = load_config(write_config(minimal_document), step=1e-2)
        assert config.solver.step == 1e-2

    def test_document_solver_section(self, write_config, minimal_document):
        document = _with(minimal_document, solver={"step": 5e-3}, tolerances={"tau_pass": 1e-6})
        config = load_config(write_config(document))
        assert config.solver.step == 5e-3
        assert config.settings.tau_pass == 1e-6

    def test_domain_override(self, write_config, minimal_document):
        config = load_config(write_config(minimal_document), domain=(0.0, 2.0))
        assert config.systems['A'].domain == (0.0, 2.0)

    def test_digest_tracks_bytes(self, write_config, minimal_document):
        first = load_config(write_config(minimal_document, "a.json")).digest
        again = load_config(write_config(minimal_document, "b.json")).digest
        changed = load_config(write_config(_with(minimal_document, domain=[0, 4]), "c.json")).digest
        assert first == again
        assert first != changed


class TestReferences:
    def test_unresolved_system(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "theorem1", "system": "Z", "gains": "g"}])
        with pytest.raises(UnresolvedReference) as excinfo:
            load_config(write_config(document))
        assert excinfo.value.name == 'Z'
        assert "'Z'" in str(excinfo.value)

    def test_unresolved_gains(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "theorem1", "system": "A", "gains": "nope"}])
        with pytest.raises(UnresolvedReference, match="nope"):
            load_config(write_config(document))

    def test_unresolved_probe(self, write_config, minimal_document):
        document = _with(minimal_document, probes=["step", "square"])
        with pytest.raises(UnresolvedReference, match="square"):
            load_config(write_config(document))

    def test_missing_reference_key(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "commute", "a": "A"}])
        with pytest.raises(ConfigError, match="needs 'b'"):
            load_config(write_config(document))

    def test_conjugate_of(self, write_config, minimal_document):
        document = copy.deepcopy(minimal_document)
        document["systems"]["B"] = {"conjugate_of": "A", "gains": "g"}
        config = load_config(write_config(document))
        b0 = evaluate(config.systems['B'].coeffs[0], np.array([0.0, 2.0]))
        np.testing.assert_allclose(b0, [3.0, 4.0])

    def test_cycle(self, write_config, minimal_document):
        document = copy.deepcopy(minimal_document)
        document["systems"]["X"] = {"conjugate_of": "Y", "gains": "g"}
        document["systems"]["Y"] = {"conjugate_of": "X", "gains": "g"}
        with pytest.raises(ConfigError, match="cyclic"):
            load_config(write_config(document))


class TestValidation:
    def test_vanishing_leading_coefficient(self, write_config, minimal_document):
        document = _with(minimal_document, systems={"A": {"coeffs": ["1", "t - 1"]}})
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config(document))
        assert "system 'A'" in str(excinfo.value)
        assert "VanishingLeadingCoefficient" in str(excinfo.value)

    @pytest.mark.parametrize("coeff, error", [("t +", "ExprSyntaxError"), ("foo(t)", "UnknownIdentifier")])
    def test_bad_expression(self, write_config, minimal_document, coeff, error):
        document = _with(minimal_document, systems={"A": {"coeffs": [coeff, "1"]}})
        with pytest.raises(ConfigError, match=error):
            load_config(write_config(document))

    def test_declared_order(self, write_config, minimal_document):
        document = _with(minimal_document, systems={"A": {"order": 2, "coeffs": ["t", "1"]}})
        with pytest.raises(ConfigError, match="declared order"):
            load_config(write_config(document))

    def test_non_integer_order(self, write_config, minimal_document):
        document = _with(minimal_document, systems={"A": {"order": "one", "coeffs": ["t", "1"]}})
        with pytest.raises(ConfigError, match="order must be an integer"):
            load_config(write_config(document))

    def test_vanishing_forward_gain(self, write_config, minimal_document):
        document = _with(minimal_document, gains={"g": {"alpha": "t", "beta": "0"}})
        with pytest.raises(ConfigError, match="VanishingForwardGain"):
            load_config(write_config(document))

    def test_structural_order(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "structural-n2", "a": "A", "b": "A"}])
        with pytest.raises(ConfigError, match="order-2"):
            load_config(write_config(document))

    def test_step_not_dividing_domain(self, write_config, minimal_document):
        document = _with(minimal_document, solver={"step": 0.3})
        with pytest.raises(ConfigError, match="system 'A'"):
            load_config(write_config(document))

    def test_no_experiments(self, write_config, minimal_document):
        with pytest.raises(ConfigError, match="at least one experiment"):
            load_config(write_config(_with(minimal_document, experiments=[])))

    def test_unknown_kind(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "bode"}])
        with pytest.raises(ConfigError, match="unknown experiment kind"):
            load_config(write_config(document))

    def test_duplicate_id(self, write_config, minimal_document):
        entry = {"id": "same", "kind": "theorem1", "system": "A", "gains": "g"}
        document = _with(minimal_document, experiments=[entry, dict(entry)])
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(write_config(document))

    @pytest.mark.parametrize("first, second", [
        ({"id": "a b", "kind": "simulate", "system": "A"}, {"id": "a-b", "kind": "simulate", "system": "A"}),
        ({"id": "x", "kind": "commute", "a": "A", "b": "A"}, {"id": "x-step-ab", "kind": "simulate", "system": "A"}),
        ({"id": "c-x", "kind": "cascade", "first": "A", "second": "A"},
         {"id": "c", "kind": "commute", "a": "A", "b": "A", "probes": ["x-step"]}),
    ])
    def test_colliding_output_files(self, write_config, minimal_document, first, second):
        document = _with(minimal_document, experiments=[first, second],
                         signals={"x-step": {"kind": "step"}})
        with pytest.raises(ConfigError, match="would both write"):
            load_config(write_config(document))

    def test_bad_relation(self, write_config, minimal_document):
        entry = {"kind": "theorem2", "g1": "g", "g2": "g", "relation": "guessed"}
        with pytest.raises(ConfigError, match="relation"):
            load_config(write_config(_with(minimal_document, experiments=[entry])))

    def test_unknown_signal_kind(self, write_config, minimal_document):
        document = _with(minimal_document, signals={"s": {"kind": "square"}})
        with pytest.raises(ConfigError, match="unknown signal kind"):
            load_config(write_config(document))

    def test_invalid_json_has_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "systems": {\n    "A": [1, 2,\n')
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.location.startswith(f"{path}:")
        assert "JSON parse error" in str(excinfo.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="file not found"):
            load_config(tmp_path / "absent.json")


class TestSignals:
    def test_default_signal_is_step(self, write_config, minimal_document):
        document = _with(minimal_document, experiments=[{"kind": "simulate", "system": "A"}])
        experiment = load_config(write_config(document)).experiments[0]
        assert experiment.refs['signal'] == 'step'
        assert experiment.objects['signal'].name == 'step'

    def test_declared_signal(self, write_config, minimal_document):
        document = _with(
            minimal_document,
            signals={"pulse": {"kind": "piecewise_linear", "knots": [[0, 0], [1, 1], [2, 0]]}},
            experiments=[{"kind": "simulate", "system": "A", "signal": "pulse"}],
        )
        signal = load_config(write_config(document)).experiments[0].objects['signal']
        np.testing.assert_allclose(signal.evaluate(np.array([0.5, 1.5, 4.0])), [0.5, 0.5, 0.0])

    def test_probe_lists(self, write_config, minimal_document):
        document = _with(
            minimal_document,
            probes=["step", "chirp"],
            experiments=[{"kind": "commute", "a": "A", "b": "A", "probes": ["sin2t"]}],
        )
        config = load_config(write_config(document))
        assert config.probes == ['step', 'chirp']
        assert [p.name for p in config.experiments[0].probes] == ['sin2t']

    def test_probes_follow_system_domain(self, write_config, minimal_document):
        document = _with(
            minimal_document,
            systems={"A": {"coeffs": ["t", "1"]}, "short": {"coeffs": ["1", "1"], "domain": [0, 2]}},
            probes=["chirp", "ramp-hold"],
            experiments=[
                {"id": "long", "kind": "commute", "a": "A", "b": "A"},
                {"id": "short", "kind": "commute", "a": "short", "b": "short"},
            ],
        )
        long_run, short_run = load_config(write_config(document)).experiments
        chirp, ramp = short_run.probes
        assert (chirp.t0, chirp.t1) == (0.0, 2.0)
        assert ramp.knots[1] == pytest.approx((0.8, 1.0))
        assert (long_run.probes[0].t0, long_run.probes[0].t1) == (0.0, 5.0)

    def test_declared_chirp_without_span(self, write_config, minimal_document):
        document = _with(
            minimal_document,
            systems={"short": {"coeffs": ["1", "1"], "domain": [0, 2]}},
            signals={
                "sweep": {"kind": "chirp", "f0": 0.1, "f1": 1.0},
                "fixed": {"kind": "chirp", "f0": 0.1, "f1": 1.0, "domain": [0, 1]},
            },
            experiments=[
                {"kind": "simulate", "system": "short", "signal": "sweep"},
                {"kind": "commute", "a": "short", "b": "short", "probes": ["sweep", "fixed"]},
            ],
        )
        simulate, commute = load_config(write_config(document)).experiments
        assert (simulate.objects['signal'].t0, simulate.objects['signal'].t1) == (0.0, 2.0)
        sweep, fixed = commute.probes
        assert (sweep.t0, sweep.t1) == (0.0, 2.0)
        assert (fixed.t0, fixed.t1) == (0.0, 1.0)


@pytest.mark.parametrize("path", EXAMPLE_CONFIGS, ids=lambda p: p.name)
def test_shipped_documents_load(path):
    config = load_config(path)
    assert config.experiments
