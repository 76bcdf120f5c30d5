#include "doctest.h"

#include "fieldloc/errors.hpp"
#include "fieldloc/potentials.hpp"
#include "test_util.hpp"

using namespace fieldloc;
using testutil::uniform;
using testutil::uniform_int;

namespace {

HypothesisBox random_box(std::mt19937_64& rng, int n)
{
    for (;;) {
        HypothesisBox b;
        for (int d = 0; d < 4; ++d) {
            b.lo[d] = uniform_int(rng, 0, n - 1);
            b.hi[d] = uniform_int(rng, b.lo[d], n - 1);
        }
        if (b.normalize()) return b;
    }
}

template <typename Fn>
void for_each_in(const HypothesisBox& b, Fn&& fn)
{
    Hypothesis y;
    for (y.y[0] = b.lo[0]; y.y[0] <= b.hi[0]; ++y.y[0])
        for (y.y[1] = b.lo[1]; y.y[1] <= b.hi[1]; ++y.y[1])
            for (y.y[2] = b.lo[2]; y.y[2] <= b.hi[2]; ++y.y[2])
                for (y.y[3] = b.lo[3]; y.y[3] <= b.hi[3]; ++y.y[3])
                    if (y.y[0] < y.y[1] && y.y[2] < y.y[3]) fn(y);
}

} // namespace

TEST_CASE("box normalization")
{
    HypothesisBox b{{3, 0, 0, 0}, {5, 4, 2, 2}};
    REQUIRE(b.normalize());
    CHECK(b.lo == std::array<int, 4>{3, 4, 0, 1});
    CHECK(b.hi == std::array<int, 4>{3, 4, 1, 2});
    HypothesisBox empty{{5, 0, 0, 1}, {6, 5, 0, 1}};
    CHECK_FALSE(empty.normalize());
    std::mt19937_64 rng(1);
    const RayGrid g = testutil::small_grid(rng, 8);
    CHECK_THROWS_AS(bound_box(Weights{}, testutil::random_accumulators(rng, 8, 8), g, standard_field(), empty),
                    EmptyBox);
}

TEST_CASE("tying schemes")
{
    CHECK(num_params(Tying::G) == 4);
    CHECK(num_params(Tying::GVerLHorLC) == 7);
    WeightVector w(Tying::GVerLHorLC, {1, 2, 3, 4, 5, 6, 7});
    const Weights e = w.expanded();
    CHECK(e[kFirstLine + 0] == 5);   // goalline: vertical
    CHECK(e[kFirstLine + 3] == 5);   // halfway line
    CHECK(e[kFirstLine + 7] == 6);   // touchline
    CHECK(e[kFirstCircle + 2] == 7);
    const WeightVector g(Tying::G, {1, 1, 1, 1});
    CHECK(g.expanded()[kFirstLine] == 0.0);
    for (auto t : {Tying::G, Tying::GL, Tying::GLC, Tying::GVerLHorLC, Tying::Untied}) {
        CHECK(tying_from_string(to_string(t)) == t);
        FeatureVector phi{};
        for (int i = 0; i < kNumFeatures; ++i) phi[i] = 0.01 * (i + 1);
        std::vector<double> p(num_params(t));
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = 0.3 * k - 1;
        const WeightVector wv(t, p);
        const auto gf = group_features(t, phi);
        double grouped = 0;
        for (std::size_t k = 0; k < p.size(); ++k) grouped += p[k] * gf[k];
        CHECK(grouped == doctest::Approx(score(wv.expanded(), phi)));
    }
    const auto j = to_json(w);
    const WeightVector back = weights_from_json(j);
    CHECK(back.tying == w.tying);
    CHECK(back.params == w.params);
}

TEST_CASE("score is a dot product")
{
    std::mt19937_64 rng(3);
    Weights w{};
    FeatureVector phi{};
    for (int i = 0; i < kNumFeatures; ++i) phi[i] = uniform(rng, 0, 1);
    CHECK(score(w, phi) == 0.0);
    w[kGrassIn] = 1.0;
    CHECK(score(w, phi) == phi[kGrassIn]);
    for (int trial = 0; trial < 100; ++trial) {
        w = testutil::random_weights(rng);
        long double direct = 0;
        for (int i = 0; i < kNumFeatures; ++i) direct += static_cast<long double>(w[i]) * phi[i];
        CHECK(score(w, phi) == doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
    }
}

TEST_CASE("grass potentials match per-pixel percentages")
{
    std::mt19937_64 rng(12);
    const ImageSize size{80, 60};
    const RayGrid g = testutil::small_grid(rng, 10, size);
    BitMask mask(size);
    for (auto& v : mask.data) v = uniform(rng, 0, 1) < 0.7;
    const AccumulatorSet acc = build_accumulators(g, mask, {}, {});
    for (int trial = 0; trial < 100; ++trial) {
        Hypothesis y;
        y.y[0] = uniform_int(rng, 0, 8);
        y.y[1] = uniform_int(rng, y.y[0] + 1, 9);
        y.y[2] = uniform_int(rng, 0, 8);
        y.y[3] = uniform_int(rng, y.y[2] + 1, 9);
        double gin = 0, gtot = 0, nin = 0, ntot = 0;
        for (int py = 0; py < size.height; ++py)
            for (int px = 0; px < size.width; ++px) {
                const auto [i, j] = cell_of_pixel(g, {double(px), double(py)});
                const bool inside = i >= y.y[0] && i < y.y[1] && j >= y.y[2] && j < y.y[3];
                (mask.at(px, py) ? gtot : ntot) += 1;
                if (inside) (mask.at(px, py) ? gin : nin) += 1;
            }
        const auto phi = phi_grass(acc, y);
        CHECK(std::abs(phi[0] - gin / gtot) <= 1e-12);
        CHECK(std::abs(phi[1] - (gtot - gin) / gtot) <= 1e-12);
        CHECK(std::abs(phi[2] - nin / ntot) <= 1e-12);
        CHECK(std::abs(phi[3] - (ntot - nin) / ntot) <= 1e-12);
        CHECK(phi[0] + phi[1] == doctest::Approx(1.0));
        const Potentials pot(acc, g, standard_field());
        const FeatureVector f = pot.phi(y);
        for (int k = 0; k < 4; ++k) CHECK(f[k] == phi[k]);
    }
    const BitMask grass(size, 1);
    const AccumulatorSet all = build_accumulators(g, grass, {}, {});
    const auto phi = phi_grass(all, Hypothesis{{0, 9, 0, 9}});
    CHECK(phi[0] == 1.0);
    CHECK(phi[1] == 0.0);
    CHECK(phi[2] == 0.0);
    CHECK(phi[3] == 0.0);
}

TEST_CASE("features lie in [0,1] and zero totals give zero")
{
    std::mt19937_64 rng(13);
    const RayGrid g = testutil::small_grid(rng, 8);
    const AccumulatorSet acc = testutil::random_accumulators(rng, 8, 8);
    const Potentials pot(acc, g, standard_field());
    for_each_in(HypothesisBox::root(8, 8), [&](const Hypothesis& y) {
        for (double v : pot.phi(y)) CHECK((v >= 0.0 && v <= 1.0));
    });
    AccumulatorSet empty;
    for (auto& t : empty.tables) t = IntegralTable(8, 8);
    const Potentials zero(empty, g, standard_field());
    for (double v : zero.phi(Hypothesis{{1, 5, 2, 6}})) CHECK(v == 0.0);
}

TEST_CASE("bounds: admissible, tight on singletons, monotone under inclusion")
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const RayGrid g = testutil::small_grid(rng, 8);
        const AccumulatorSet acc = testutil::random_accumulators(rng, 8, 8);
        const Potentials pot(acc, g, standard_field());
        const Weights w = testutil::random_weights(rng);
        const HypothesisBox box = random_box(rng, 8);
        const double b = pot.bound(w, box);
        for_each_in(box, [&](const Hypothesis& y) {
            const double s = pot.score(w, y);
            CHECK(b >= s);
            CHECK(pot.bound(w, HypothesisBox::singleton(y)) == s);
            for (int i = 0; i < kNumFeatures; ++i) {
                CHECK(pot.bound_feature(i, box, true) >= pot.phi_feature(i, y));
                CHECK(pot.bound_feature(i, box, false) <= pot.phi_feature(i, y));
            }
        });
        // A random sub-box never has a larger bound.
        HypothesisBox sub = box;
        for (int d = 0; d < 4; ++d) {
            sub.lo[d] = uniform_int(rng, box.lo[d], box.hi[d]);
            sub.hi[d] = uniform_int(rng, sub.lo[d], box.hi[d]);
        }
        if (sub.normalize()) CHECK(pot.bound(w, sub) <= b);
    }
}
