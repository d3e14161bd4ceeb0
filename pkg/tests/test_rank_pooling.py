import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynimg.errors import DataError
from dynimg.frame_io import Frame, FrameSequence, Modality
from dynimg.rank_pooling import (DynamicImage, PoolingInput, PoolingProblem, SolverConfig, SolverDiverged,
                                 approx_coefficients, approx_pool, denormalize, dynamic_image, flatten,
                                 make_problem, normalize_image, objective, running_average, score,
                                 solve_exact, stack_features, to_dynamic_image)


# -- independent oracles ---------------------------------------------------

def prefix_mean_oracle(x):
    out = []
    for t in range(1, len(x) + 1):
        acc = [0.0] * len(x[0])
        for row in x[:t]:
            acc = [a + b for a, b in zip(acc, row)]
        out.append([a / t for a in acc])
    return np.array(out)


def dot_oracle(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def objective_oracle(d, vectors, lam):
    T = len(vectors)
    hinge = 0.0
    for t in range(T):
        for p in range(t + 1, T):
            hinge += max(0.0, 1.0 - dot_oracle(d, vectors[p]) + dot_oracle(d, vectors[t]))
    return lam / 2 * dot_oracle(d, d) + 2.0 / (T * (T - 1)) * hinge


def hinge_descent_at_zero_oracle(vectors):
    """Negated hinge-sum subgradient at d = 0: every pair is active there."""
    out = np.zeros(len(vectors[0]))
    for t, p in itertools.combinations(range(len(vectors)), 2):
        out += vectors[p] - vectors[t]
    return out


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# -- stack / average / score ------------------------------------------------

def test_stack_rgb_row_major_interleaved():
    f = Frame(np.array([[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]]))
    np.testing.assert_array_equal(stack_features(f), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])


def test_stack_depth_passthrough():
    np.testing.assert_array_equal(stack_features(Frame(np.full((2, 2, 1), 0.5))), [0.5] * 4)


def test_running_average_examples():
    np.testing.assert_array_equal(running_average([[1, 1], [3, 3]]), [[1, 1], [2, 2]])
    np.testing.assert_array_equal(running_average([[4.0, 5.0]]), [[4.0, 5.0]])
    with pytest.raises(DataError):
        running_average(np.zeros((0, 3)))


def test_running_average_matches_prefix_oracle(rng):
    x = rng.normal(size=(10, 7))
    np.testing.assert_allclose(running_average(x), prefix_mean_oracle(x.tolist()), rtol=0, atol=1e-13)


def test_score():
    assert score([1, 0], [3, 7]) == 3
    assert score(np.zeros(4), np.arange(4)) == 0


def test_score_matches_loop(rng):
    a, b = rng.normal(size=(2, 50))
    assert abs(score(a, b) - dot_oracle(a, b)) <= 1e-12


# -- objective --------------------------------------------------------------

@pytest.mark.parametrize("T", [2, 3, 7])
def test_objective_at_zero_is_one(rng, T):
    assert objective(np.zeros(5), PoolingProblem(rng.normal(size=(T, 5)))) == 1.0


def test_objective_identical_vectors(rng):
    v = rng.normal(size=6)
    d = rng.normal(size=6)
    prob = PoolingProblem(np.tile(v, (5, 1)), lam=0.7)
    assert objective(d, prob) == pytest.approx(0.35 * d @ d + 1.0, abs=1e-12)


def test_objective_matches_double_loop(rng):
    V = rng.normal(size=(5, 8))
    d = rng.normal(size=8) * 0.3
    prob = PoolingProblem(V, lam=1.3)
    assert abs(objective(d, prob) - objective_oracle(d, V, 1.3)) <= 1e-12


def test_objective_needs_two_frames():
    with pytest.raises(DataError, match="at least two frames"):
        objective(np.zeros(3), PoolingProblem(np.zeros((1, 3))))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
def test_objective_convex_along_lines(seed, theta):
    r = np.random.default_rng(seed)
    T, D = int(r.integers(2, 8)), int(r.integers(1, 12))
    prob = PoolingProblem(r.normal(size=(T, D)), lam=float(r.uniform(0.1, 3)))
    d1, d2 = r.normal(size=(2, D))
    lhs = objective(theta * d1 + (1 - theta) * d2, prob)
    assert lhs <= theta * objective(d1, prob) + (1 - theta) * objective(d2, prob) + 1e-9


# -- exact solver -----------------------------------------------------------

def test_solver_identical_vectors_returns_zero(rng):
    prob = PoolingProblem(np.tile(rng.normal(size=9), (6, 1)), lam=1.0)
    d = solve_exact(prob, SolverConfig(max_iters=500, step0=0.1, lam=1.0))
    assert np.linalg.norm(d) <= 1e-6


def test_solver_never_worse_than_zero(rng):
    for _ in range(10):
        prob = PoolingProblem(rng.normal(size=(int(rng.integers(2, 8)), 10)))
        assert objective(solve_exact(prob), prob) <= 1.0


def test_solver_beats_random_probes():
    r = np.random.default_rng(2024)
    prob = PoolingProblem(r.normal(size=(4, 6)))
    d = solve_exact(prob)
    e = objective(d, prob)
    probes = np.random.default_rng(99).normal(scale=np.linalg.norm(d) / np.sqrt(6), size=(1000, 6))
    assert e <= min(objective(p, prob) for p in probes)


def test_solver_deterministic(rng):
    prob = PoolingProblem(rng.normal(size=(5, 12)))
    np.testing.assert_array_equal(solve_exact(prob), solve_exact(prob))


def test_solver_diverges_loudly():
    prob = PoolingProblem(np.arange(8, dtype=float).reshape(4, 2) * 1e300)
    with pytest.raises(SolverDiverged):
        solve_exact(prob, SolverConfig(step0=1e300))


def test_solver_time_averaged_uses_running_means(rng):
    x = rng.uniform(size=(6, 5))
    prob = make_problem(x, PoolingInput.TIME_AVERAGED)
    np.testing.assert_allclose(prob.vectors, prefix_mean_oracle(x.tolist()), atol=1e-13)


# -- approximate pooling ----------------------------------------------------

def test_approx_coefficients_T3():
    np.testing.assert_array_equal(approx_coefficients(3), [-2.0, 0.0, 2.0])


@pytest.mark.parametrize("mode", list(PoolingInput))
def test_approx_single_frame_is_zero(mode):
    np.testing.assert_array_equal(approx_pool(np.ones((1, 4)), mode), np.zeros(4))


@pytest.mark.parametrize("T", range(2, 11))
def test_approx_raw_parallel_to_hinge_descent(T):
    x = np.random.default_rng(T).normal(size=(T, 12))
    assert cosine(approx_pool(x), hinge_descent_at_zero_oracle(x)) >= 1 - 1e-10


@pytest.mark.parametrize("T", range(2, 11))
def test_approx_averaged_parallel_to_hinge_descent_on_means(T):
    x = np.random.default_rng(100 + T).normal(size=(T, 12))
    means = prefix_mean_oracle(x.tolist())
    got = approx_pool(x, PoolingInput.TIME_AVERAGED)
    assert cosine(got, hinge_descent_at_zero_oracle(means)) >= 1 - 1e-10


def test_averaged_coefficients_small_case():
    # T=2: A1 = x1, A2 = (x1+x2)/2, A2 - A1 = (x2 - x1)/2 -> weights (-1, 1) up to scale
    c = approx_coefficients(2, PoolingInput.TIME_AVERAGED)
    assert c[1] > 0 and c[0] == pytest.approx(-c[1])


@pytest.mark.parametrize("mode", list(PoolingInput))
def test_constant_video_gives_null_image(mode):
    frame = Frame(np.random.default_rng(5).uniform(size=(6, 7, 3)))
    seq = FrameSequence(Modality.RGB, (frame,) * 8)
    for exact in (False, True):
        img = dynamic_image(seq, exact=exact, mode=mode)
        assert np.abs(img.values).max() <= 1e-6


# -- image conversion -------------------------------------------------------

def test_to_dynamic_image_inverts_stacking(rng):
    frame = Frame(rng.uniform(size=(3, 4, 3)))
    img = to_dynamic_image(stack_features(frame), 3, 4, 3, Modality.RGB)
    np.testing.assert_array_equal(img.values, frame.data)


def test_zero_vector_image():
    img = to_dynamic_image(np.zeros(12), 2, 2, 3, Modality.RGB)
    assert np.all(img.values == 0) and img.value_range == (0.0, 0.0)


def test_flatten_round_trip(rng):
    d = rng.normal(size=5 * 3 * 1)
    np.testing.assert_array_equal(flatten(to_dynamic_image(d, 5, 3, 1, Modality.DEPTH)), d)
    with pytest.raises(DataError):
        to_dynamic_image(d, 4, 4, 1, Modality.DEPTH)


def test_normalize_examples():
    img = normalize_image(DynamicImage(np.array([[-2.0, 0.0, 2.0]]), Modality.DEPTH))
    np.testing.assert_array_equal(img.values[:, :, 0], [[0.0, 0.5, 1.0]])
    assert img.value_range == (-2.0, 2.0) and img.rest_level == 0.5
    flat = normalize_image(DynamicImage(np.full((2, 2), 3.0), Modality.DEPTH))
    assert np.all(flat.values == 0)


def test_normalize_spans_unit_interval(rng):
    img = normalize_image(DynamicImage(rng.normal(size=(5, 5, 3)), Modality.RGB))
    assert img.values.min() == 0.0 and img.values.max() == 1.0
    back = denormalize(img)
    np.testing.assert_allclose(back.values.min(), img.value_range[0])
