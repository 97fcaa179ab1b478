#include <cmath>
#include <cstring>
#include <limits>

#include <doctest.h>

#include "oracles.hpp"
#include "splitlora/error.hpp"
#include "splitlora/grad_check.hpp"
#include "splitlora/matrix.hpp"
#include "splitlora/rng.hpp"

using namespace splitlora;

TEST_SUITE_BEGIN("numerics");

TEST_CASE("matmul by identity is a no-op") {
    const Matrix a = Matrix::from_rows({{1.5, -2.0}, {0.25, 4.0}});
    const Matrix out = matmul(a, Matrix::identity(2));
    CHECK(out.bitwise_equal(a));
}

TEST_CASE("matmul matches hand value and the naive oracle bitwise") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5}, {6}});
    const Matrix out = matmul(a, b);
    CHECK(out(0, 0) == 17.0);
    CHECK(out(1, 0) == 39.0);
    CHECK(out.bitwise_equal(oracles::naive_matmul(a, b)));
}

TEST_CASE("matmul agrees with the naive oracle on random shapes") {
    SeededRng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.next_below(7);
        const std::size_t k = 1 + rng.next_below(7);
        const std::size_t m = 1 + rng.next_below(7);
        const Matrix a = gaussian_init(n, k, 1.0, rng);
        const Matrix b = gaussian_init(k, m, 1.0, rng);
        CHECK(matmul(a, b).bitwise_equal(oracles::naive_matmul(a, b)));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both operands") {
    const Matrix a(2, 3);
    const Matrix b(2, 5);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("2x5") != std::string::npos);
    }
}

TEST_CASE("matmul is associative within 1e-9 relative tolerance") {
    SeededRng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = gaussian_init(4, 5, 1.0, rng);
        const Matrix b = gaussian_init(5, 3, 1.0, rng);
        const Matrix c = gaussian_init(3, 6, 1.0, rng);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        CHECK(oracles::max_rel_diff(left, right) < 1e-9);
    }
}

TEST_CASE("gaussian_init with sigma zero is the zero matrix") {
    SeededRng rng(3);
    const Matrix out = gaussian_init(3, 4, 0.0, rng);
    for (double v : out.entries()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("gaussian_init is byte-identical for identical seed, dims and sigma") {
    SeededRng rng_a(123);
    SeededRng rng_b(123);
    const Matrix a = gaussian_init(17, 9, 0.5, rng_a);
    const Matrix b = gaussian_init(17, 9, 0.5, rng_b);
    CHECK(a.bitwise_equal(b));
}

TEST_CASE("gaussian_init rejects negative sigma") {
    SeededRng rng(1);
    CHECK_THROWS_AS(gaussian_init(2, 2, -0.1, rng), ParameterError);
}

TEST_CASE("gaussian_init sample statistics match sigma 0.02") {
    SeededRng rng(2026);
    const Matrix sample = gaussian_init(1000, 1000, 0.02, rng);
    double mean = 0.0;
    for (double v : sample.entries()) {
        mean += v;
    }
    mean /= static_cast<double>(sample.size());
    double var = 0.0;
    for (double v : sample.entries()) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(sample.size());
    CHECK(std::abs(mean) < 0.001);
    CHECK(std::abs(std::sqrt(var) - 0.02) < 0.002);
}

TEST_CASE("finite_diff_grad of an entry sum is all ones") {
    const Matrix x = Matrix::from_rows({{1.0, -2.0}, {0.5, 3.0}});
    const auto f = [](const Matrix& m) {
        double total = 0.0;
        for (double v : m.entries()) {
            total += v;
        }
        return total;
    };
    const Matrix g = finite_diff_grad(f, x, 1e-6);
    for (double v : g.entries()) {
        CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("finite_diff_grad matches the analytic derivative of x^2") {
    const Matrix x = Matrix::from_rows({{3.0}});
    const auto f = [](const Matrix& m) { return m(0, 0) * m(0, 0); };
    const Matrix g = finite_diff_grad(f, x, 1e-5);
    CHECK(std::abs(g(0, 0) - 6.0) < 1e-8);
}

TEST_CASE("finite_diff_grad rejects non-positive eps") {
    const Matrix x(1, 1);
    const auto f = [](const Matrix&) { return 0.0; };
    CHECK_THROWS_AS(finite_diff_grad(f, x, 0.0), ParameterError);
    CHECK_THROWS_AS(finite_diff_grad(f, x, -1e-5), ParameterError);
}

TEST_CASE("finite_diff_grad flags non-finite function values") {
    const Matrix x(1, 1);
    const auto f = [](const Matrix&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(finite_diff_grad(f, x, 1e-5), NumericError);
}

TEST_CASE("seeded stream is reproducible and derivation is seed-only") {
    SeededRng a(99);
    SeededRng b(99);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    // a has advanced, b' derivation must not care
    SeededRng child_a = a.derive(5);
    SeededRng child_b = b.derive(5);
    CHECK(child_a.next_u64() == child_b.next_u64());
    CHECK(SeededRng(99).derive(5).next_u64() != SeededRng(99).derive(6).next_u64());
}

TEST_CASE("next_below stays in range and rejects zero") {
    SeededRng rng(5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.next_below(7) < 7);
    }
    CHECK_THROWS_AS(rng.next_below(0), ParameterError);
}

TEST_CASE("non-finite inputs are rejected by public operations") {
    Matrix a(2, 2);
    a(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(matmul(a, Matrix::identity(2)), NumericError);
}

TEST_SUITE_END();
