import re

import numpy as np
import pytest

from conftest import make_matrix
from tractconn.errors import FormatError, InvalidArgumentError
from tractconn.glyph import OTHER, OTHER_COLOR, Palette, load_label_names, pie_sectors, render_pie_glyphs, sector_angles


def test_three_to_one_row_gives_270_and_90_degrees():
    sectors = pie_sectors(np.array([30, 10]), [7, 9])
    assert sector_angles(sectors) == pytest.approx([270.0, 90.0])


def test_zero_row_has_no_sectors():
    assert pie_sectors(np.zeros(3), [1, 2, 3]) == []


def test_small_fractions_merge_into_other():
    sectors = pie_sectors(np.array([97, 1, 1, 1]), [1, 2, 3, 4], min_fraction=0.02)
    assert [label for label, _ in sectors] == [1, OTHER]
    assert sectors[1][1] == pytest.approx(0.03)


def test_sector_angles_sum_to_full_turn():
    rng = np.random.default_rng(1)
    for _ in range(50):
        row = rng.integers(0, 50, size=6)
        row[0] += 1
        assert sum(sector_angles(pie_sectors(row, range(1, 7)))) == pytest.approx(360.0)


def test_palette_gives_distinct_colours():
    palette = Palette.for_labels(range(1, 65))
    assert len(set(palette.colors.values())) == 64
    assert palette.color(OTHER) == OTHER_COLOR
    assert Palette.for_labels([3], {3: "#FF0000"}).color(3) == "#ff0000"
    with pytest.raises(InvalidArgumentError):
        Palette.for_labels([3], {3: "red"})


def test_default_colour_moves_only_on_a_hue_collision():
    # 47 and 280 share hue bin 17
    alone = Palette.for_labels([280]).color(280)
    assert Palette.for_labels([5, 280, 1000]).color(280) == alone
    both = Palette.for_labels([47, 280])
    assert both.color(47) == Palette.for_labels([47]).color(47) == alone
    assert both.color(280) != alone


def test_bar_slice_draws_half_and_half(bar):
    C = make_matrix(bar.region, np.tile([0, 50, 50], (3, 1)))
    svg = render_pie_glyphs(C, bar.region, axis="z", slice_index=2)
    assert svg.startswith('<?xml version="1.0"')
    assert svg.count("<path ") == 6
    assert svg.count("<g id=") == 3
    assert '<g id="v5_2_2">' in svg
    assert "7 50.0%, 9 50.0%" in svg
    # every wedge here is exactly a half circle, so none takes the large arc
    assert re.findall(r"A \S+ \S+ 0 (\d) 1", svg) == ["0"] * 6


def test_rendering_is_deterministic(bar):
    C = make_matrix(bar.region, [[0, 3, 1], [2, 0, 0], [0, 1, 9]])
    first = render_pie_glyphs(C, bar.region, slice_index=2)
    assert render_pie_glyphs(C, bar.region, slice_index=2) == first
    # row 1 has no target counts; row 2 is one sector of 90% plus 10%
    assert first.count("<g id=") == 2


def test_single_sector_is_a_full_circle(line_region):
    C = make_matrix(line_region, [[0, 5, 0], [0, 0, 0], [0, 0, 0]])
    svg = render_pie_glyphs(C, line_region, axis="z", slice_index=1)
    assert svg.count("<circle ") == 1
    assert "<path " not in svg


def test_empty_slice_and_bad_arguments(line_region):
    C = make_matrix(line_region, [[0, 5, 1]] * 3)
    assert "<g id=" not in render_pie_glyphs(C, line_region, axis="z", slice_index=0)
    with pytest.raises(InvalidArgumentError):
        render_pie_glyphs(C, line_region, axis="z", slice_index=3)
    with pytest.raises(InvalidArgumentError):
        render_pie_glyphs(C, line_region, axis="w", slice_index=0)
    with pytest.raises(InvalidArgumentError):
        render_pie_glyphs(C, line_region, slice_index=1, min_fraction=1.0)


def test_legend_names_are_escaped(line_region):
    C = make_matrix(line_region, [[0, 5, 1]] * 3)
    svg = render_pie_glyphs(C, line_region, slice_index=1, names={7: "A & B", 9: "<C>", 11: "unused"})
    assert "7 A &amp; B" in svg
    assert "9 &lt;C&gt;" in svg
    assert "unused" not in svg


def test_label_table(tmp_path):
    path = tmp_path / "lut.tsv"
    path.write_text("7\tthalamus\t#112233\n\n9\tcortex\n", encoding="utf-8")
    table = load_label_names(path)
    assert table.names == {7: "thalamus", 9: "cortex"}
    assert table.colors == {7: "#112233"}
    path.write_text("7\tthalamus\nnine\tcortex\n", encoding="utf-8")
    with pytest.raises(FormatError, match="line 2"):
        load_label_names(path)
