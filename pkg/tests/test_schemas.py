import json

import numpy as np
import pytest

from src.algebra import FiniteCStarAlgebra
from src.errors import InputError, InvalidObjectError
from src.schemas import (
    load_json,
    parse_algebra,
    parse_compression,
    parse_element,
    parse_family,
    parse_matrix,
    parse_permissible,
    parse_sequence,
    parse_space,
    parse_state,
)

from .conftest import PAULI_Y, PAULI_Z


class TestPrimitives:
    def test_algebra_forms(self):
        assert parse_algebra([2]).blocks == (2,)
        assert parse_algebra({'blocks': [1, 1]}).blocks == (1, 1)

    @pytest.mark.parametrize("bad", [[], [0], [1.5], "2", {'blocks': None}])
    def test_bad_algebra(self, bad):
        with pytest.raises(InputError):
            parse_algebra(bad)

    def test_matrix_forms_agree(self):
        pairs = [[[0, 0], [0, -1]], [[0, 1], [0, 0]]]
        split = {'re': [[0, 0], [0, 0]], 'im': [[0, -1], [1, 0]]}
        np.testing.assert_allclose(parse_matrix(pairs, "m"), PAULI_Y)
        np.testing.assert_allclose(parse_matrix(split, "m"), PAULI_Y)

    def test_matrix_shape(self):
        with pytest.raises(InputError, match="m"):
            parse_matrix([1, 2, 3], "m")

    def test_element_forms(self, m2, c2):
        z = parse_element(m2, {'blocks': [[[1, 0], [0, -1]]]})
        np.testing.assert_allclose(z.matrix(), PAULI_Z)
        np.testing.assert_allclose(parse_element(m2, {'coords': list(z.coords)}).coords, z.coords)
        f = parse_element(c2, {'values': [0.5, -0.5]})
        np.testing.assert_allclose(np.diag(f.matrix()).real, [0.5, -0.5])

    def test_non_hermitian_element(self, m2):
        with pytest.raises((InputError, InvalidObjectError)):
            parse_element(m2, {'blocks': [[[0, 1], [0, 0]]]})

    def test_states(self, m2, c2):
        assert parse_state(c2, {'kind': 'dirac', 'point': 1})(c2.function([3.0, 7.0])) == pytest.approx(7.0)
        pole = parse_state(m2, {'kind': 'vector', 'vector': [0, 1]})
        assert pole(m2.element([PAULI_Z])) == pytest.approx(-1.0)
        mixed = parse_state(m2, {'densities': [[[0.5, 0], [0, 0.5]]]})
        np.testing.assert_allclose(mixed.coords, m2.trace_state().coords, atol=1e-12)
        assert parse_state(m2, "trace")(m2.unit()) == pytest.approx(1.0)

    def test_unknown_state(self, m2):
        with pytest.raises(InputError, match="unknown state kind"):
            parse_state(m2, {'kind': 'thermal'})

    def test_permissible(self):
        assert parse_permissible({'C': 2, 'D': 0.5}).constants == (2.0, 0.5)
        assert parse_permissible({'family': 'power', 'p': 2, 'C': 1.5}).constants is None
        with pytest.raises(InputError):
            parse_permissible({'family': 'exotic'})


class TestSpaces:
    def test_metric_keeps_structural_certificate(self):
        L = parse_space({'kind': 'metric', 'dist': [[0, 1], [1, 0]]})
        assert L.certification.grade == "structural"
        assert L.space.size == 2

    def test_metric_from_points(self):
        L = parse_space({'kind': 'metric', 'points': [[0, 0], [3, 4]], 'label': "segment"})
        assert L.label == "segment"
        assert L.space.dist[0, 1] == pytest.approx(5.0)

    def test_type_alias(self):
        a = parse_space({'type': 'preset', 'name': 'pauli'})
        b = parse_space({'kind': 'preset', 'name': 'pauli'})
        assert a.certification.passed and b.certification.passed

    def test_vrep_certified_on_load(self):
        L = parse_space({'kind': 'vrep', 'algebra': [2],
                         'generators': [{'blocks': [[[1, 0], [0, -1]]]}, {'blocks': [[[0, 1], [1, 0]]]},
                                        {'blocks': [[[[0, 0], [0, -1]], [[0, 1], [0, 0]]]]}]})
        assert L.certification is not None
        assert L.certification.passed

    def test_uncertified_when_asked(self):
        L = parse_space({'kind': 'preset', 'name': 'pauli'}, certify=False)
        assert L.certification is None

    def test_hrep_spectral_shape(self):
        with pytest.raises(InputError, match="spectral"):
            parse_space({'kind': 'hrep', 'algebra': [2],
                         'spectral': [{'target': [2], 'matrix': [[1, 0], [0, 1]]}]})

    def test_hrep_needs_terms(self):
        with pytest.raises(InputError):
            parse_space({'kind': 'hrep', 'algebra': [1, 1]})

    def test_unbounded_section_rejected(self):
        # a single generator cannot bound the section of M_2
        with pytest.raises(InvalidObjectError):
            parse_space({'kind': 'vrep', 'algebra': [2], 'generators': [{'blocks': [[[1, 0], [0, -1]]]}]})

    def test_unknown_kind(self):
        with pytest.raises(InputError, match="space"):
            parse_space({'kind': 'sphere'})


class TestCompressions:
    def test_kinds(self, m2, c2):
        assert parse_compression(m2, None).kind == "identity"
        assert parse_compression(m2, {'kind': 'pinch'}).target.blocks == (1, 1)
        corner = parse_compression(FiniteCStarAlgebra((1, 2)), {'kind': 'corner', 'blocks': [1]})
        assert corner.target.blocks == (2,)

    def test_corner_from_projection(self, m2):
        comp = parse_compression(m2, {'kind': 'corner', 'projection': {'blocks': [[[1, 0], [0, 0]]]}})
        assert comp.target.dim_complex == 1

    def test_blocks_out_of_range(self, c2):
        with pytest.raises(InputError, match="out of range"):
            parse_compression(c2, {'kind': 'corner', 'blocks': [2]})


class TestCollections:
    def test_family_labels(self):
        fam = parse_family({'members': [{'kind': 'metric', 'label': 'a', 'dist': [[0, 1], [1, 0]]},
                                        {'kind': 'preset', 'name': 'point'}]})
        assert fam.labels == ['a', 'm1']
        assert fam.metadata['closure_assumed'] is True

    def test_empty_family(self):
        with pytest.raises(InputError):
            parse_family({'members': []})

    def test_rotated_sequence(self):
        seq = parse_sequence({'kind': 'rotated_pauli', 'length': 4})
        assert len(seq) == 4
        assert all(L.algebra.blocks == (2,) for L in seq)

    def test_load_json(self, tmp_path):
        p = tmp_path / "in.json"
        p.write_text(json.dumps({'space': {'kind': 'preset', 'name': 'point'}}))
        assert load_json(str(p))['space']['name'] == 'point'
        p.write_text("[1, 2]")
        with pytest.raises(InputError, match="object"):
            load_json(str(p))
        with pytest.raises(InputError, match="not found"):
            load_json(str(tmp_path / "missing.json"))
