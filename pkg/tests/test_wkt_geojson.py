"""WKT and GeoJSON readers/writers."""

import json

import numpy as np
import pytest

from polymp.errors import MissingLabel, ParseError, RingTooShort, UnsupportedGeometry
from polymp.geometry import (
    Polygon,
    parse_geojson_features,
    parse_wkt,
    serialize_geojson_features,
    serialize_wkt,
)


class TestWkt:
    def test_unit_square(self):
        p = parse_wkt("POLYGON ((0 0, 1 0, 1 1, 0 1, 0 0))")
        assert p.exterior.tolist() == [[0, 0], [1, 0], [1, 1], [0, 1]]
        assert p.holes == ()

    def test_unclosed_ring_accepted(self):
        p = parse_wkt("POLYGON((0 0, 1 0, 1 1))")
        assert len(p.exterior) == 3

    def test_hole_ring(self):
        p = parse_wkt(
            "POLYGON ((0 0, 10 0, 10 10, 0 10, 0 0),"
            " (2 2, 2 8, 8 8, 8 2, 2 2))"
        )
        assert len(p.holes) == 1
        assert len(p.holes[0]) == 4

    def test_two_vertex_ring_rejected(self):
        with pytest.raises(RingTooShort):
            parse_wkt("POLYGON ((0 0, 1 0))")

    def test_parse_error_carries_position(self):
        with pytest.raises(ParseError) as exc:
            parse_wkt("POLYGON ((0 0, 1 0, 1 1, x y))")
        assert exc.value.pos is not None

    def test_trailing_garbage(self):
        with pytest.raises(ParseError):
            parse_wkt("POLYGON ((0 0, 1 0, 1 1)) extra")

    def test_not_a_polygon(self):
        with pytest.raises(ParseError):
            parse_wkt("LINESTRING (0 0, 1 1)")

    def test_scientific_notation(self):
        p = parse_wkt("POLYGON ((0 0, 1e2 0, 1e2 1E-3, 0 1e-3))")
        assert p.exterior[1, 0] == 100.0

    def test_round_trip_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            ring = rng.uniform(-100, 100, size=(6, 2))
            hole = rng.uniform(-0.4, 0.4, size=(4, 2))
            p = Polygon(ring + np.arange(6)[:, None] * 30, (hole,))
            q = parse_wkt(serialize_wkt(p))
            assert np.array_equal(q.exterior, p.exterior)
            assert np.array_equal(q.holes[0], p.holes[0])


class TestGeoJson:
    def collection(self, features):
        return json.dumps({"type": "FeatureCollection", "features": features})

    def feature(self, coords, props=None, gtype="Polygon"):
        return {
            "type": "Feature",
            "geometry": {"type": gtype, "coordinates": coords},
            "properties": props if props is not None else {"label": "L"},
        }

    def test_single_feature(self):
        text = self.collection(
            [self.feature([[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]])]
        )
        out = parse_geojson_features(text)
        assert len(out) == 1
        poly, label = out[0]
        assert label == "L"
        assert len(poly.exterior) == 4

    def test_empty_collection(self):
        assert parse_geojson_features(self.collection([])) == []

    def test_linestring_rejected(self):
        text = self.collection([self.feature([[0, 0], [1, 1]], gtype="LineString")])
        with pytest.raises(UnsupportedGeometry):
            parse_geojson_features(text)

    def test_multipolygon_rejected(self):
        coords = [[[[0, 0], [1, 0], [1, 1], [0, 0]]]]
        text = self.collection([self.feature(coords, gtype="MultiPolygon")])
        with pytest.raises(UnsupportedGeometry):
            parse_geojson_features(text)

    def test_missing_label(self):
        text = self.collection(
            [self.feature([[[0, 0], [1, 0], [1, 1], [0, 0]]], props={})]
        )
        with pytest.raises(MissingLabel):
            parse_geojson_features(text)

    def test_custom_label_key(self):
        text = self.collection(
            [self.feature([[[0, 0], [1, 0], [1, 1], [0, 0]]], props={"kind": "T"})]
        )
        out = parse_geojson_features(text, label_key="kind")
        assert out[0][1] == "T"

    def test_invalid_json(self):
        with pytest.raises(ParseError):
            parse_geojson_features("{not json")

    def test_round_trip(self):
        p = Polygon([(0, 0), (4, 0), (4, 4), (0, 4)], ([(1, 1), (1, 3), (3, 3), (3, 1)],))
        text = serialize_geojson_features([(p, "O")])
        out = parse_geojson_features(text)
        assert out[0][1] == "O"
        assert np.array_equal(out[0][0].exterior, p.exterior)
        assert np.array_equal(out[0][0].holes[0], p.holes[0])
