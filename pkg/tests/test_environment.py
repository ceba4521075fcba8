import numpy as np
import pytest

from cstrack.constitution import (
    Atom,
    CategoricalClause,
    Constant,
    ConstitutionEvaluator,
    ContinuousClause,
    bind_environment,
    constitution_probability,
    environment_atoms,
    format_clause,
    ground,
    parse,
    precompute_field,
    query_probability,
)
from cstrack.constitution.field import ConstitutionField
from cstrack.errors import ConfigurationError, OutOfBoundsError
from cstrack.grids import GridSpec
from cstrack.relations import RelationKind
from cstrack.starmap import StaRMapLayer


def flat_layer(rel, tag, mean, std, bbox=(0.0, 0.0, 100.0, 100.0), rows=3, cols=3):
    grid = GridSpec(bbox=bbox, rows=rows, cols=cols)
    return StaRMapLayer(
        relation=RelationKind(rel),
        tag=tag,
        grid=grid,
        mean=np.full((rows, cols), float(mean)),
        std=np.full((rows, cols), float(std)),
        sample_count=2,
    )


def gradient_layer(rel, tag, bbox=(0.0, 0.0, 100.0, 100.0), rows=5, cols=5):
    grid = GridSpec(bbox=bbox, rows=rows, cols=cols)
    xs = np.linspace(0.0, 1.0, cols)
    mean = np.tile(xs, (rows, 1))
    return StaRMapLayer(
        relation=RelationKind(rel), tag=tag, grid=grid, mean=mean,
        std=np.zeros((rows, cols)), sample_count=2,
    )


class TestEnvironmentAtoms:
    def test_discovery(self):
        program = parse(
            r"1.0 :: constitution(X, Z) :- \+ over(X, land), distance(X, way) < 100."
        )
        assert environment_atoms(program) == [
            ("over", "X", "land"),
            ("distance", "X", "way"),
        ]

    def test_measurement_side_atom(self):
        program = parse("1.0 :: constitution(X, Z) :- over(Z, water).")
        assert environment_atoms(program) == [("over", "Z", "water")]

    def test_non_query_variable_rejected(self):
        program = parse("1.0 :: constitution(X, Z) :- over(L, land).")
        with pytest.raises(ConfigurationError):
            bind_environment(program, [flat_layer("over", "land", 1, 0)], (50, 50), (50, 50))


class TestBindEnvironment:
    def test_certain_layer_becomes_certain_fact(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        bound = bind_environment(
            program, [flat_layer("over", "land", 1.0, 0.0)], (50, 50), (50, 50)
        )
        fact = bound.clauses[-1]
        assert format_clause(fact) == "1.0 :: over(x, land)."

    def test_distance_layer_becomes_normal_fact(self):
        program = parse("1.0 :: constitution(X, Z) :- distance(X, road) > 50.")
        bound = bind_environment(
            program, [flat_layer("distance", "road", 100.0, 1.0)], (50, 50), (50, 50)
        )
        fact = bound.clauses[-1]
        assert format_clause(fact) == "distance(x, road) ~ normal(100.0, 1.0)."

    def test_zero_std_gets_sigma_floor(self):
        program = parse("1.0 :: constitution(X, Z) :- distance(X, road) > 50.")
        bound = bind_environment(
            program, [flat_layer("distance", "road", 100.0, 0.0)], (50, 50), (50, 50)
        )
        fact = bound.clauses[-1]
        assert isinstance(fact, ContinuousClause)
        assert fact.dist.std == 1e-3

    def test_query_is_bound_to_constants(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        bound = bind_environment(
            program, [flat_layer("over", "land", 0.5, 0.0)], (50, 50), (50, 50)
        )
        assert bound.query == Atom("constitution", (Constant("x"), Constant("z")))

    def test_missing_layer_is_configuration_error(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        with pytest.raises(ConfigurationError):
            bind_environment(program, [], (50, 50), (50, 50))

    def test_out_of_bbox_raises(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        with pytest.raises(OutOfBoundsError):
            bind_environment(
                program, [flat_layer("over", "land", 1, 0)], (500, 50), (50, 50)
            )

    def test_mean_clamped_into_unit_interval(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        bound = bind_environment(
            program, [flat_layer("over", "land", 1.2, 0.0)], (50, 50), (50, 50)
        )
        assert bound.clauses[-1].prob == 1.0

    def test_existing_ground_fact_is_user_override(self):
        program = parse(
            "0.25 :: over(x, land).\n"
            "1.0 :: constitution(X, Z) :- over(X, land).\n"
        )
        bound = bind_environment(
            program, [flat_layer("over", "land", 0.9, 0.0)], (50, 50), (50, 50)
        )
        probs = [c.prob for c in bound.clauses if isinstance(c, CategoricalClause)
                 and c.head.key() == "over(x,land)"]
        assert probs == [0.25]


class TestConstitutionProbability:
    def test_constant_one_constitution(self):
        program = parse("1.0 :: constitution(X, Z).")
        p = constitution_probability(program, [], (1.0, 2.0), (1.0, 2.0))
        assert p == 1.0

    def test_pass_through_over_fact(self):
        # constitution :- over; probability equals the interpolated mean.
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        layer = gradient_layer("over", "land")
        for x in (0.0, 25.0, 50.0, 80.0):
            p = constitution_probability(program, [layer], (x, 50.0), (x, 50.0))
            assert p == pytest.approx(x / 100.0, abs=1e-12)

    def test_matches_generic_ground_path(self):
        # The slotted evaluator must agree with binding concrete values and
        # running the generic enumeration engine.
        program = parse(
            r"""
            0.9 :: attentive.
            1.0 :: safe(X) :- \+ over(X, land), distance(X, way) < 60.
            1.0 :: constitution(X, Z) :- attentive, safe(X).
            """
        )
        layers = [
            gradient_layer("over", "land"),
            flat_layer("distance", "way", 50.0, 10.0),
        ]
        for point in [(10.0, 10.0), (50.0, 50.0), (90.0, 20.0)]:
            fast = constitution_probability(program, layers, point, point)
            bound = bind_environment(program, layers, point, point)
            reference = query_probability(ground(bound))
            assert fast == pytest.approx(reference, abs=1e-12)

    def test_matches_generic_path_with_measurement_atoms(self):
        # Harder consistency case: X- and Z-side atoms, a depth comparison,
        # negation, and a probabilistic rule, at random point pairs.
        program = parse(
            r"""
            0.7 :: calm.
            1.0 :: afloat(X) :- \+ over(X, land).
            1.0 :: deep(X) :- depth(X, water) > 8.
            1.0 :: plausible(Z) :- \+ over(Z, land).
            0.9 :: constitution(X, Z) :- calm, afloat(X), deep(X), plausible(Z).
            """
        )
        layers = [
            gradient_layer("over", "land"),
            flat_layer("depth", "water", 9.0, 2.0),
        ]
        rng = np.random.default_rng(12)
        for _ in range(6):
            state = rng.uniform(5.0, 95.0, 2)
            meas = rng.uniform(5.0, 95.0, 2)
            fast = constitution_probability(program, layers, state, meas)
            reference = query_probability(
                ground(bind_environment(program, layers, state, meas))
            )
            assert fast == pytest.approx(reference, abs=1e-12)

    def test_measurement_side_binding(self):
        program = parse(
            "1.0 :: constitution(X, Z) :- over(X, land), over(Z, land)."
        )
        layer = gradient_layer("over", "land")
        p = constitution_probability(program, [layer], (100.0, 50.0), (0.0, 50.0))
        assert p == pytest.approx(1.0 * 0.0, abs=1e-12)
        p = constitution_probability(program, [layer], (100.0, 50.0), (50.0, 50.0))
        assert p == pytest.approx(0.5, abs=1e-12)


class TestEvaluatorBatch:
    def test_batch_equals_scalar_bitwise(self):
        program = parse(
            "0.8 :: cautious.\n"
            "1.0 :: constitution(X, Z) :- cautious, over(X, land), "
            "distance(X, way) < 60.\n"
        )
        layers = [
            gradient_layer("over", "land"),
            gradient_layer("distance", "way"),
        ]
        ev = ConstitutionEvaluator(program, layers)
        rng = np.random.default_rng(4)
        pts = rng.uniform(0.0, 100.0, size=(64, 2))
        batch = ev.probabilities(pts, pts)
        for i in range(len(pts)):
            assert ev.probability(pts[i], pts[i]) == batch[i]

    def test_outside_points_flagged_when_allowed(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        ev = ConstitutionEvaluator(program, [gradient_layer("over", "land")])
        pts = np.array([[50.0, 50.0], [500.0, 50.0]])
        out = ev.probabilities(pts, pts, allow_outside=True)
        assert np.isfinite(out[0])
        assert np.isnan(out[1])


class TestPrecomputeField:
    def test_constant_one_field(self):
        program = parse("1.0 :: constitution(X, Z).")
        grid = GridSpec(bbox=(0.0, 0.0, 100.0, 100.0), rows=4, cols=4)
        field = precompute_field(program, [], grid)
        assert (field.values == 1.0).all()

    def test_cell_equals_direct_probability_exactly(self):
        program = parse(
            "1.0 :: constitution(X, Z) :- over(X, land), distance(X, way) < 60."
        )
        layers = [
            gradient_layer("over", "land"),
            flat_layer("distance", "way", 55.0, 8.0),
        ]
        grid = GridSpec(bbox=(0.0, 0.0, 100.0, 100.0), rows=5, cols=5)
        field = precompute_field(program, layers, grid)
        for idx in (0, 7, 12, 24):
            node = grid.node_points()[idx]
            direct = constitution_probability(program, layers, node, node)
            assert field.values.ravel()[idx] == direct

    def test_field_grid_larger_than_starmap_flags_outside(self):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        layers = [gradient_layer("over", "land")]
        grid = GridSpec(bbox=(0.0, 0.0, 200.0, 100.0), rows=3, cols=5)
        field = precompute_field(program, layers, grid)
        assert np.isnan(field.values[:, -1]).all()
        assert np.isfinite(field.values[:, 0]).all()

    def test_fixed_measurement_policy(self):
        program = parse("1.0 :: constitution(X, Z) :- over(Z, land).")
        layers = [gradient_layer("over", "land")]
        grid = GridSpec(bbox=(0.0, 0.0, 100.0, 100.0), rows=3, cols=3)
        field = precompute_field(program, layers, grid, measurement=(100.0, 50.0))
        assert (field.values == 1.0).all()

    def test_json_round_trip(self, tmp_path):
        program = parse("1.0 :: constitution(X, Z) :- over(X, land).")
        grid = GridSpec(bbox=(0.0, 0.0, 100.0, 100.0), rows=3, cols=3)
        field = precompute_field(program, [gradient_layer("over", "land")], grid)
        path = tmp_path / "field.json"
        field.save(path)
        loaded = ConstitutionField.load(path)
        np.testing.assert_array_equal(loaded.values, field.values)

    def test_clamped_interpolation(self):
        grid = GridSpec(bbox=(0.0, 0.0, 1.0, 1.0), rows=2, cols=2)
        field = ConstitutionField(grid=grid, values=np.array([[0.0, 1.0], [0.0, 1.0]]))
        vals = field.at_clamped(np.array([[-5.0, 0.5], [5.0, 0.5]]))
        assert vals[0] == 0.0 and vals[1] == 1.0
