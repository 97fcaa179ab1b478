#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "splitlora/error.hpp"
#include "splitlora/grad_check.hpp"
#include "splitlora/lora.hpp"
#include "splitlora/rng.hpp"

using namespace splitlora;

namespace {

LoraAdapter make_adapter(std::uint32_t site, const Matrix& a, const Matrix& b, double alpha) {
    LoraAdapter ad;
    ad.site_id = site;
    ad.alpha = alpha;
    ad.a = a;
    ad.b = b;
    return ad;
}

AdapterSet random_set(SeededRng& rng, std::size_t d = 3, std::size_t m = 4, std::size_t r = 2) {
    AdapterSet set;
    for (std::uint32_t site : {0u, 5u, 16u}) {
        LoraAdapter ad;
        ad.site_id = site;
        ad.alpha = static_cast<double>(r);
        ad.a = gaussian_init(d, r, 0.5, rng);
        ad.b = gaussian_init(r, m, 0.5, rng);
        set.insert(std::move(ad));
    }
    return set;
}

}  // namespace

TEST_SUITE_BEGIN("lora");

TEST_CASE("init_adapter yields a zero product and the contracted shapes") {
    SeededRng rng(11);
    const LoraAdapter ad = init_adapter(3, 4, 6, 2, 2.0, 0.02, rng);
    CHECK(ad.a.rows() == 4);
    CHECK(ad.a.cols() == 2);
    CHECK(ad.b.rows() == 2);
    CHECK(ad.b.cols() == 6);
    const Matrix product = matmul(ad.a, ad.b);
    for (double v : product.entries()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("init_adapter rejects out-of-range ranks") {
    SeededRng rng(1);
    CHECK_THROWS_AS(init_adapter(0, 4, 6, 5, 5.0, 0.02, rng), ParameterError);
    CHECK_THROWS_AS(init_adapter(0, 4, 6, 0, 1.0, 0.02, rng), ParameterError);
}

TEST_CASE("adapter_forward matches the dense oracle on the worked example") {
    const Matrix h = Matrix::from_rows({{1, 2}});
    const Matrix w = Matrix::identity(2);
    const LoraAdapter ad =
        make_adapter(0, Matrix::from_rows({{1}, {1}}), Matrix::from_rows({{1, 0}}), 1.0);
    const Matrix out = adapter_forward(h, w, ad);
    CHECK(out(0, 0) == 4.0);
    CHECK(out(0, 1) == 2.0);
    CHECK(oracles::max_rel_diff(out, oracles::dense_adapter_forward(h, w, ad)) < 1e-12);
}

TEST_CASE("adapter_forward applies alpha/rank scaling") {
    const Matrix h = Matrix::from_rows({{1, 2}});
    const Matrix w = Matrix::identity(2);
    const LoraAdapter ad =
        make_adapter(0, Matrix::from_rows({{1}, {1}}), Matrix::from_rows({{1, 0}}), 2.0);
    const Matrix out = adapter_forward(h, w, ad);
    CHECK(out(0, 0) == 7.0);
    CHECK(out(0, 1) == 2.0);
    CHECK(oracles::max_rel_diff(out, oracles::dense_adapter_forward(h, w, ad)) < 1e-12);
}

TEST_CASE("zero-initialized adapter leaves the frozen forward untouched") {
    SeededRng rng(4);
    const Matrix h = gaussian_init(5, 4, 1.0, rng);
    const Matrix w = gaussian_init(4, 6, 1.0, rng);
    SeededRng init_rng(9);
    const LoraAdapter ad = init_adapter(0, 4, 6, 2, 2.0, 0.02, init_rng);
    CHECK(adapter_forward(h, w, ad).bitwise_equal(matmul(h, w)));
}

TEST_CASE("adapter_forward rejects shape mismatches") {
    const Matrix h(2, 3);
    const Matrix w(4, 6);
    SeededRng rng(1);
    const LoraAdapter ad = init_adapter(0, 4, 6, 2, 2.0, 0.02, rng);
    CHECK_THROWS_AS(adapter_forward(h, w, ad), ShapeError);
}

TEST_CASE("adapter_backward reproduces the scalar example") {
    const Matrix h = Matrix::from_rows({{2}});
    const Matrix w = Matrix::from_rows({{0}});
    const LoraAdapter ad =
        make_adapter(0, Matrix::from_rows({{3}}), Matrix::from_rows({{5}}), 1.0);
    const Matrix g_out = Matrix::from_rows({{1}});
    const AdapterBackwardResult r = adapter_backward(h, g_out, w, ad);
    CHECK(r.ga(0, 0) == 10.0);
    CHECK(r.gb(0, 0) == 6.0);
    CHECK(r.g_h(0, 0) == 15.0);
}

TEST_CASE("adapter_backward is zero for zero upstream gradient") {
    SeededRng rng(21);
    const Matrix h = gaussian_init(3, 3, 1.0, rng);
    const Matrix w = gaussian_init(3, 4, 1.0, rng);
    const LoraAdapter ad = make_adapter(0, gaussian_init(3, 2, 1.0, rng),
                                        gaussian_init(2, 4, 1.0, rng), 2.0);
    const AdapterBackwardResult r = adapter_backward(h, Matrix(3, 4), w, ad);
    for (double v : r.ga.entries()) CHECK(v == 0.0);
    for (double v : r.gb.entries()) CHECK(v == 0.0);
    for (double v : r.g_h.entries()) CHECK(v == 0.0);
}

TEST_CASE("adapter_backward matches finite differences on a random instance") {
    SeededRng rng(33);
    const Matrix h = gaussian_init(2, 3, 1.0, rng);
    const Matrix w = gaussian_init(3, 4, 1.0, rng);
    const LoraAdapter ad = make_adapter(7, gaussian_init(3, 2, 0.7, rng),
                                        gaussian_init(2, 4, 0.7, rng), 2.0);
    Matrix ones(2, 4);
    for (std::size_t i = 0; i < ones.size(); ++i) {
        ones.data()[i] = 1.0;
    }
    const AdapterBackwardResult r = adapter_backward(h, ones, w, ad);

    const auto loss_of_a = [&](const Matrix& a) {
        LoraAdapter probe = ad;
        probe.a = a;
        double total = 0.0;
        for (double v : adapter_forward(h, w, probe).entries()) {
            total += v;
        }
        return total;
    };
    const auto loss_of_b = [&](const Matrix& b) {
        LoraAdapter probe = ad;
        probe.b = b;
        double total = 0.0;
        for (double v : adapter_forward(h, w, probe).entries()) {
            total += v;
        }
        return total;
    };
    CHECK(oracles::max_rel_diff(r.ga, finite_diff_grad(loss_of_a, ad.a, 1e-5), 1e-6) < 1e-6);
    CHECK(oracles::max_rel_diff(r.gb, finite_diff_grad(loss_of_b, ad.b, 1e-5), 1e-6) < 1e-6);
}

TEST_CASE("sgd_update applies one arithmetic step") {
    const LoraAdapter ad =
        make_adapter(0, Matrix::from_rows({{1.0}}), Matrix::from_rows({{2.0}}), 1.0);
    const LoraAdapter next =
        sgd_update(ad, Matrix::from_rows({{2.0}}), Matrix::from_rows({{0.0}}), 0.1);
    CHECK(next.a(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(next.b(0, 0) == 2.0);
    CHECK(next.site_id == ad.site_id);
    CHECK(next.alpha == ad.alpha);
}

TEST_CASE("sgd_update with zero gradients is a bitwise fixed point") {
    SeededRng rng(17);
    const LoraAdapter ad = make_adapter(2, gaussian_init(3, 2, 1.0, rng),
                                        gaussian_init(2, 5, 1.0, rng), 2.0);
    const LoraAdapter next = sgd_update(ad, Matrix(3, 2), Matrix(2, 5), 0.5);
    CHECK(next.a.bitwise_equal(ad.a));
    CHECK(next.b.bitwise_equal(ad.b));
}

TEST_CASE("sgd_update with G then -G restores the adapter within 1e-15") {
    SeededRng rng(18);
    const LoraAdapter ad = make_adapter(2, gaussian_init(3, 2, 1.0, rng),
                                        gaussian_init(2, 5, 1.0, rng), 2.0);
    const Matrix ga = gaussian_init(3, 2, 1.0, rng);
    const Matrix gb = gaussian_init(2, 5, 1.0, rng);
    const LoraAdapter there = sgd_update(ad, ga, gb, 0.25);
    const LoraAdapter back = sgd_update(there, scaled(ga, -1.0), scaled(gb, -1.0), 0.25);
    CHECK(oracles::max_abs_diff(back.a, ad.a) < 1e-15);
    CHECK(oracles::max_abs_diff(back.b, ad.b) < 1e-15);
}

TEST_CASE("sgd_update rejects non-positive gamma") {
    const LoraAdapter ad =
        make_adapter(0, Matrix::from_rows({{1.0}}), Matrix::from_rows({{2.0}}), 1.0);
    CHECK_THROWS_AS(sgd_update(ad, Matrix(1, 1), Matrix(1, 1), 0.0), ParameterError);
}

TEST_CASE("aggregate averages symmetric and weighted pairs exactly") {
    AdapterSet s1;
    s1.insert(make_adapter(0, Matrix::from_rows({{2.0}}), Matrix::from_rows({{1.0}}), 1.0));
    AdapterSet s2;
    s2.insert(make_adapter(0, Matrix::from_rows({{4.0}}), Matrix::from_rows({{1.0}}), 1.0));
    const AdapterSet sets[] = {s1, s2};

    const double equal[] = {0.5, 0.5};
    CHECK(aggregate(sets, equal).adapters[0].a(0, 0) == 3.0);

    AdapterSet z1;
    z1.insert(make_adapter(0, Matrix::from_rows({{0.0}}), Matrix::from_rows({{1.0}}), 1.0));
    const AdapterSet weighted_sets[] = {z1, s2};
    const double weighted[] = {0.25, 0.75};
    CHECK(aggregate(weighted_sets, weighted).adapters[0].a(0, 0) == 3.0);
}

TEST_CASE("aggregating identical sets returns the set bitwise for any weights") {
    SeededRng rng(5);
    const AdapterSet base = random_set(rng);
    const std::vector<AdapterSet> sets(3, base);
    SeededRng wrng(6);
    for (int trial = 0; trial < 10; ++trial) {
        double raw[3];
        double total = 0.0;
        for (double& w : raw) {
            w = 0.01 + wrng.next_unit();
            total += w;
        }
        for (double& w : raw) {
            w /= total;
        }
        const AdapterSet out = aggregate(sets, raw);
        CHECK(oracles::sets_bitwise_equal(out, base));
    }
}

TEST_CASE("a single weight-1 client passes through aggregation bitwise") {
    SeededRng rng(8);
    std::vector<AdapterSet> sets;
    for (int i = 0; i < 3; ++i) {
        sets.push_back(random_set(rng));
    }
    const double weights[] = {0.0, 1.0, 0.0};
    CHECK(oracles::sets_bitwise_equal(aggregate(sets, weights), sets[1]));
}

TEST_CASE("aggregation is a convex combination per entry") {
    SeededRng rng(9);
    std::vector<AdapterSet> sets;
    for (int i = 0; i < 4; ++i) {
        sets.push_back(random_set(rng));
    }
    const double weights[] = {0.1, 0.2, 0.3, 0.4};
    const AdapterSet out = aggregate(sets, weights);
    for (std::size_t ai = 0; ai < out.size(); ++ai) {
        for (std::size_t e = 0; e < out.adapters[ai].a.size(); ++e) {
            double lo = sets[0].adapters[ai].a.data()[e];
            double hi = lo;
            for (const AdapterSet& s : sets) {
                lo = std::min(lo, s.adapters[ai].a.data()[e]);
                hi = std::max(hi, s.adapters[ai].a.data()[e]);
            }
            const double v = out.adapters[ai].a.data()[e];
            CHECK(v >= lo - 1e-15);
            CHECK(v <= hi + 1e-15);
        }
    }
}

TEST_CASE("aggregate validates weights and structure") {
    SeededRng rng(10);
    std::vector<AdapterSet> sets{random_set(rng), random_set(rng)};
    const double bad_sum[] = {0.5, 0.6};
    CHECK_THROWS_AS(aggregate(sets, bad_sum), ParameterError);
    const double negative[] = {-0.5, 1.5};
    CHECK_THROWS_AS(aggregate(sets, negative), ParameterError);

    std::vector<AdapterSet> mismatched{random_set(rng), random_set(rng, 3, 5, 2)};
    const double ok[] = {0.5, 0.5};
    CHECK_THROWS_AS(aggregate(mismatched, ok), StructureError);
}

TEST_CASE("count_trainable follows rank * (d + m)") {
    SeededRng rng(12);
    AdapterSet set;
    set.insert(init_adapter(0, 4, 6, 2, 2.0, 0.02, rng));
    CHECK(count_trainable(set) == 20);
    CHECK(count_trainable(AdapterSet{}) == 0);
}

TEST_CASE("count_trainable is linear in rank and doubles with it") {
    SeededRng rng(13);
    for (std::size_t r : {1u, 2u, 4u}) {
        AdapterSet at_r;
        AdapterSet at_2r;
        for (std::uint32_t site : {0u, 1u, 17u}) {
            SeededRng site_rng = rng.derive(site);
            at_r.insert(init_adapter(site, 8, 12, r, 1.0, 0.02, site_rng));
            at_2r.insert(init_adapter(site, 8, 12, 2 * r, 1.0, 0.02, site_rng));
        }
        CHECK(count_trainable(at_2r) == 2 * count_trainable(at_r));
        CHECK(count_trainable(at_r) == r * 3 * (8 + 12));
    }
}

TEST_CASE("frozen weights are untouched by forward and backward") {
    SeededRng rng(14);
    const Matrix h = gaussian_init(4, 3, 1.0, rng);
    const Matrix w = gaussian_init(3, 5, 1.0, rng);
    const Matrix w_copy = w;
    const LoraAdapter ad = make_adapter(0, gaussian_init(3, 2, 1.0, rng),
                                        gaussian_init(2, 5, 1.0, rng), 2.0);
    adapter_forward(h, w, ad);
    adapter_backward(h, Matrix(4, 5), w, ad);
    CHECK(w.bitwise_equal(w_copy));
}

TEST_CASE("adapter checkpoints round-trip bitwise") {
    SeededRng rng(15);
    const AdapterSet set = random_set(rng);
    const auto path = std::filesystem::temp_directory_path() / "splitlora_ckpt_test.slra";
    save_adapters(path, set);
    const AdapterSet loaded = load_adapters(path);
    CHECK(oracles::sets_bitwise_equal(loaded, set));
    std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto path = std::filesystem::temp_directory_path() / "splitlora_ckpt_bad.slra";
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_adapters(path), DataError);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
