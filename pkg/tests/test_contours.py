import numpy as np
import pytest

from quermass.contours import (NON_CORRECT, Contour, SpinField, Tiling, check_label_coherence,
                               classify_correctness, contours_from_json, contours_to_json, domino_set,
                               extract_contours, geometric_compatibility, interior_boundary,
                               ratio_bound_holds, spin_field)
from quermass.errors import DegenerateContourError, PaddingError, ParameterDomainError
from quermass.model import Configuration, QuermassParams, TileBox


def single_site_field(n: int = 5) -> SpinField:
    box = TileBox.centered(n)
    spins = np.zeros((n, n), dtype=np.int8)
    spins[n // 2, n // 2] = 1
    return SpinField((box.i0, box.j0), spins, exterior=0)


def occupied_block(n: int = 11) -> SpinField:
    return SpinField((0, 0), np.ones((n, n), dtype=np.int8), exterior=0)


class TestTiling:
    def test_worked_example(self, worked_tiling):
        assert worked_tiling.delta == pytest.approx(1 / (2 * np.sqrt(2)))
        assert worked_tiling.L == 6

    def test_L_below_minimum(self, worked_params):
        with pytest.raises(ParameterDomainError):
            Tiling.for_params(worked_params, L=5)

    def test_ball_sizes(self):
        assert len(Tiling(1.0, 6).ball_offsets(6)) == 113
        assert len(Tiling(1.0, 6, norm="sup").ball_offsets(6)) == 169

    def test_ball_order(self, small_tiling):
        assert small_tiling.ball_offsets(1).tolist() == [[0, 0], [-1, 0], [0, -1], [0, 1], [1, 0]]

    def test_tile_of_half_open(self):
        tiles = Tiling(1.0, 1).tile_of(np.array([[0.4, 0.2], [0.5, -0.5], [-0.51, 0.0]]))
        assert tiles.tolist() == [[0, 0], [1, 0], [-1, 0]]


class TestSpinField:
    def test_occupied_tiles(self, small_tiling):
        cfg = Configuration(np.array([[0.4, 0.2], [0.6, 0.0], [9.0, 9.0]]), np.ones(3))
        field = spin_field(cfg, small_tiling, TileBox.centered(3))
        assert field.sites_with(1).tolist() == [[0, 0], [1, 0]]
        assert field.spin((9, 9)) == 0

    def test_exterior_spin_outside_domain(self):
        field = SpinField((0, 0), np.zeros((2, 2)), exterior=1)
        assert field.spins_at(np.array([[0, 0], [5, 5]])).tolist() == [0, 1]


class TestCorrectness:
    def test_single_tile_ball(self, small_tiling):
        cmap = classify_correctness(single_site_field().padded(3), small_tiling)
        assert len(cmap.non_correct_sites()) == 5
        assert cmap.label((0, 0)) == NON_CORRECT
        assert cmap.label((2, 2)) == 0

    def test_worked_example_count(self, worked_tiling):
        field = single_site_field(15).padded(2 * worked_tiling.L + 1)
        cmap = classify_correctness(field, worked_tiling)
        assert len(cmap.non_correct_sites()) == 113

    def test_all_occupied(self, small_tiling):
        cmap = classify_correctness(SpinField((0, 0), np.ones((6, 6)), exterior=1), small_tiling)
        assert np.all(cmap.labels == 1)

    def test_field_too_small(self, small_tiling):
        with pytest.raises(PaddingError):
            classify_correctness(SpinField((0, 0), np.zeros((2, 2))), small_tiling)

    def test_unclassifiable_site(self, small_tiling):
        with pytest.raises(PaddingError):
            classify_correctness(SpinField((0, 0), np.zeros((5, 5))), small_tiling, sites=[(0, 0)])


class TestExtractContours:
    def test_single_tile(self, small_tiling):
        contours = extract_contours(single_site_field(), small_tiling)
        assert len(contours) == 1
        contour = contours[0]
        assert contour.size == 5
        assert contour.contour_type == 0
        assert contour.contour_class == 0
        assert contour.spin_map()[(0, 0)] == 1

    def test_worked_example_single_contour(self, worked_tiling):
        contours = extract_contours(single_site_field(15), worked_tiling)
        assert [c.size for c in contours] == [113]
        assert contours[0].contour_type == 0

    def test_uniform_fields_have_no_contours(self, small_tiling):
        assert extract_contours(SpinField((0, 0), np.zeros((4, 4)), exterior=0), small_tiling) == []
        assert extract_contours(SpinField((0, 0), np.ones((4, 4)), exterior=1), small_tiling) == []

    def test_block_encloses_an_occupied_interior(self, small_tiling):
        contours = extract_contours(occupied_block(), small_tiling)
        assert len(contours) == 1
        contour = contours[0]
        assert contour.contour_type == 0
        assert contour.size == 84
        assert len(contour.interior1) == 81
        assert len(contour.interior0) == 0
        assert contour.contour_class == 81

    def test_separated_tiles_give_compatible_contours(self, small_tiling):
        spins = np.zeros((9, 3), dtype=np.int8)
        spins[2, 1] = spins[6, 1] = 1
        contours = extract_contours(SpinField((0, 0), spins), small_tiling)
        assert len(contours) == 2
        assert geometric_compatibility(contours)

    def test_close_tiles_merge(self, small_tiling):
        spins = np.zeros((8, 3), dtype=np.int8)
        spins[2, 1] = spins[5, 1] = 1
        assert len(extract_contours(SpinField((0, 0), spins), small_tiling)) == 1

    def test_json_keeps_contours(self, small_tiling):
        contours = extract_contours(occupied_block(), small_tiling)
        restored = contours_from_json(contours_to_json(contours))
        assert restored[0].sites() == contours[0].sites()
        assert restored[0].contour_class == contours[0].contour_class


class TestCompatibility:
    def test_adjacent_supports(self):
        a = Contour(np.array([[0, 0]]), np.array([0]), 0)
        b = Contour(np.array([[1, 1]]), np.array([0]), 0)
        c = Contour(np.array([[2, 0]]), np.array([0]), 0)
        assert not geometric_compatibility([a, b])
        assert geometric_compatibility([a, c])

    def test_mixed_types(self):
        a = Contour(np.array([[0, 0]]), np.array([0]), 0)
        b = Contour(np.array([[5, 5]]), np.array([1]), 1)
        assert not geometric_compatibility([a, b])

    def test_single_contour(self):
        assert geometric_compatibility([Contour(np.array([[0, 0]]), np.array([1]), 1)])


class TestLabelCoherence:
    def test_extracted_contours_are_coherent(self, small_tiling):
        for field in (single_site_field(), occupied_block()):
            for contour in extract_contours(field, small_tiling):
                assert check_label_coherence(contour, field, small_tiling)

    def test_wrong_type_is_incoherent(self, small_tiling):
        field = single_site_field()
        contour = extract_contours(field, small_tiling)[0]
        flipped = Contour(contour.support, contour.spins, 1)
        assert not check_label_coherence(flipped, field, small_tiling)


class TestDominoes:
    def test_single_tile(self, small_tiling):
        field = single_site_field()
        contour = extract_contours(field, small_tiling)[0]
        assert domino_set(contour, field, small_tiling) == [((0, 0), (-1, 0))]

    def test_worked_example(self, worked_tiling):
        field = single_site_field(15)
        contour = extract_contours(field, worked_tiling)[0]
        assert domino_set(contour, field, worked_tiling) == [((0, 0), (-1, 0))]

    def test_pairs_are_adjacent_and_distinct(self, small_tiling):
        field = occupied_block()
        contour = extract_contours(field, small_tiling)[0]
        dominoes = domino_set(contour, field, small_tiling)
        assert dominoes
        spins = contour.spin_map()
        for i, j in dominoes:
            assert max(abs(i[0] - j[0]), abs(i[1] - j[1])) == 1
            assert spins[i] == 1 and spins[j] == 0
        assert len({site for pair in dominoes for site in pair}) == 2 * len(dominoes)

    def test_pair_outside_the_support_is_logged(self, small_tiling, caplog):
        contour = Contour(np.array([[0, 0], [1, 1]]), np.array([1, 0]), 0)
        with caplog.at_level("DEBUG", logger="quermass.contours"):
            assert domino_set(contour, single_site_field(), small_tiling) == []
        assert "(0, 0)-(-1, 0) from (0, 0) leaves the support" in caplog.text

    def test_single_spin_support(self, small_tiling):
        contour = Contour(np.array([[0, 0], [0, 1]]), np.array([0, 0]), 0)
        with pytest.raises(DegenerateContourError):
            domino_set(contour, single_site_field(), small_tiling)


class TestBoundaryBand:
    def test_inner_band_of_a_box(self):
        band = interior_boundary(np.ones((5, 5), dtype=bool), 1)
        assert band.sum() == 24
        assert not band[2, 2]

    def test_ratio_bound(self, small_tiling):
        contour = extract_contours(single_site_field(), small_tiling)[0]
        assert ratio_bound_holds(contour, 0.2)
        assert not ratio_bound_holds(contour, 0.25)
