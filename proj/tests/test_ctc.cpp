#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "notegate/phoneme.hpp"

using namespace notegate;

namespace {

PhonemeInventory make_inventory(std::size_t k)
{
    PhonemeInventory inv;
    for (std::size_t i = 0; i < k; ++i) inv.symbols.push_back(std::string(1, char('a' + i)));
    return inv;
}

Posteriorgram make_ppg(const Matrix& frames, std::size_t k)
{
    Posteriorgram ppg;
    ppg.frames = frames;
    ppg.inventory = make_inventory(k);
    return ppg;
}

Posteriorgram random_ppg(std::mt19937& rng, std::size_t t, std::size_t k)
{
    Matrix m(t, k + 1);
    std::uniform_real_distribution<double> uni(0.05, 1.0);
    for (std::size_t r = 0; r < t; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c <= k; ++c) {
            m(r, c) = uni(rng);
            sum += m(r, c);
        }
        for (std::size_t c = 0; c <= k; ++c) m(r, c) /= sum;
    }
    return make_ppg(m, k);
}

PhonemeSequence random_feasible_target(std::mt19937& rng, std::size_t t, std::size_t k)
{
    // Grow a target while it still fits in t frames.
    PhonemeSequence seq;
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    const std::size_t want = rng() % (t + 1);
    while (seq.labels.size() < want) {
        const std::size_t next = pick(rng);
        std::size_t repeats = 0;
        auto probe = seq.labels;
        probe.push_back(next);
        for (std::size_t i = 1; i < probe.size(); ++i)
            if (probe[i] == probe[i - 1]) ++repeats;
        if (probe.size() + repeats > t) break;
        seq.labels = std::move(probe);
    }
    return seq;
}

// Brute force: enumerate every length-T path over K+1 classes, collapse, and
// sum the probability of paths that land on the target.
double brute_force_path_sum(const Posteriorgram& ppg, const PhonemeSequence& target)
{
    const std::size_t t_total = ppg.frames.rows();
    const std::size_t classes = ppg.inventory.num_classes();
    const std::size_t blank = ppg.inventory.blank_index();
    std::vector<std::size_t> path(t_total, 0);
    double total = 0.0;
    while (true) {
        const PhonemeSequence collapsed = collapse(path, blank);
        if (collapsed == target) {
            double p = 1.0;
            for (std::size_t t = 0; t < t_total; ++t) p *= ppg.frames(t, path[t]);
            total += p;
        }
        std::size_t pos = 0;
        while (pos < t_total && ++path[pos] == classes) path[pos++] = 0;
        if (pos == t_total) return total;
    }
}

} // namespace

TEST_CASE("collapse removes repeats then blanks")
{
    const std::size_t blank = 9;
    const std::size_t a = 0, b = 1;
    CHECK(collapse(std::vector<std::size_t>{a, a, blank, a, b, b}, blank) ==
          PhonemeSequence{{a, a, b}});
    CHECK(collapse(std::vector<std::size_t>{blank, blank, blank}, blank) == PhonemeSequence{});
    CHECK(collapse(std::vector<std::size_t>{a, blank, blank, a}, blank) ==
          PhonemeSequence{{a, a}});
    CHECK_THROWS_AS(collapse(std::vector<std::size_t>{blank + 1}, blank), DataError);
}

TEST_CASE("single-frame single-label loss is -log P(label)")
{
    Matrix m(1, 2);
    m(0, 0) = 0.7;
    m(0, 1) = 0.3;
    const Posteriorgram ppg = make_ppg(m, 1);
    CHECK(ctc_loss(ppg, PhonemeSequence{{0}}) == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
}

TEST_CASE("two uniform frames over {a, blank} give -log 0.75")
{
    Matrix m(2, 2, 0.5);
    const Posteriorgram ppg = make_ppg(m, 1);
    const double loss = ctc_loss(ppg, PhonemeSequence{{0}});
    CHECK(loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(ppg_loss(loss, 1.0) == doctest::Approx(1.2877).epsilon(1e-4));
}

TEST_CASE("empty target reduces to the all-blank path")
{
    std::mt19937 rng(11);
    const Posteriorgram ppg = random_ppg(rng, 3, 2);
    double expect = 0.0;
    for (std::size_t t = 0; t < 3; ++t) expect -= std::log(ppg.frames(t, 2));
    CHECK(ctc_loss(ppg, PhonemeSequence{}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("infeasible targets raise a distinct error")
{
    std::mt19937 rng(12);
    const Posteriorgram ppg = random_ppg(rng, 2, 2);
    CHECK_THROWS_AS(ctc_loss(ppg, PhonemeSequence{{0, 1, 0}}), InfeasibleTarget);
    CHECK_THROWS_AS(ctc_loss(ppg, PhonemeSequence{{0, 0}}), InfeasibleTarget); // repeat needs 3
    CHECK_THROWS_AS(ctc_loss_grad(ppg, PhonemeSequence{{0, 1, 0}}), InfeasibleTarget);
}

TEST_CASE("forward DP matches exhaustive path enumeration")
{
    std::mt19937 rng(42);
    int done = 0;
    while (done < 220) {
        const std::size_t t = 1 + rng() % 6;
        const std::size_t k = 1 + rng() % 3;
        const Posteriorgram ppg = random_ppg(rng, t, k);
        const PhonemeSequence target = random_feasible_target(rng, t, k);
        const double brute = brute_force_path_sum(ppg, target);
        REQUIRE(brute > 0.0);
        const double loss = ctc_loss(ppg, target);
        CHECK(loss == doctest::Approx(-std::log(brute)).epsilon(1e-9));
        ++done;
    }
}

TEST_CASE("loss is invariant under inventory relabeling")
{
    std::mt19937 rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t t = 2 + rng() % 4;
        const std::size_t k = 3;
        const Posteriorgram ppg = random_ppg(rng, t, k);
        PhonemeSequence target = random_feasible_target(rng, t, k);

        std::vector<std::size_t> perm{0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng);
        Posteriorgram shuffled = ppg;
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < k; ++c) shuffled.frames(r, perm[c]) = ppg.frames(r, c);
        PhonemeSequence mapped;
        for (std::size_t l : target.labels) mapped.labels.push_back(perm[l]);

        CHECK(ctc_loss(shuffled, mapped) == doctest::Approx(ctc_loss(ppg, target)).epsilon(1e-12));
    }
}

TEST_CASE("gradient: single-path case and unreachable cells")
{
    Matrix m(1, 2);
    m(0, 0) = 0.7;
    m(0, 1) = 0.3;
    const Posteriorgram ppg = make_ppg(m, 1);
    const Matrix grad = ctc_loss_grad(ppg, PhonemeSequence{{0}});
    CHECK(grad(0, 0) == doctest::Approx(-1.0 / 0.7).epsilon(1e-12));
    CHECK(grad(0, 1) == 0.0); // blank-only cell lies on no path to the target
}

TEST_CASE("gradient matches central finite differences")
{
    std::mt19937 rng(123);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t t = 1 + rng() % 5;
        const std::size_t k = 1 + rng() % 3;
        Posteriorgram ppg = random_ppg(rng, t, k);
        const PhonemeSequence target = random_feasible_target(rng, t, k);
        const Matrix grad = ctc_loss_grad(ppg, target);

        const double h = 1e-6;
        for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t c = 0; c <= k; ++c) {
                const double orig = ppg.frames(r, c);
                ppg.frames(r, c) = orig + h;
                const double up = ctc_loss(ppg, target);
                ppg.frames(r, c) = orig - h;
                const double down = ctc_loss(ppg, target);
                ppg.frames(r, c) = orig;
                const double fd = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(fd), std::abs(grad(r, c)), 1e-3});
                CHECK(std::abs(fd - grad(r, c)) / denom < 1e-4);
            }
        }
    }
}

TEST_CASE("reconstruction loss is the squared Frobenius distance")
{
    MelSpectrogram a, b;
    a.frames = Matrix(2, 2, 0.0);
    b.frames = Matrix(2, 2, 0.5);
    a.normalized = b.normalized = true;
    CHECK(reconstruction_loss(a, a) == 0.0);
    CHECK(reconstruction_loss(a, b) == doctest::Approx(1.0).epsilon(1e-12));

    MelSpectrogram c = a;
    c.frames(1, 1) = 0.25;
    CHECK(reconstruction_loss(c, a) == doctest::Approx(0.0625).epsilon(1e-12));

    MelSpectrogram wrong;
    wrong.frames = Matrix(2, 3, 0.0);
    CHECK_THROWS_AS(reconstruction_loss(a, wrong), DataError);
}

TEST_CASE("ppg loss is the plain sum")
{
    CHECK(ppg_loss(0.3, 0.2) == doctest::Approx(0.5));
    CHECK(ppg_loss(0.0, 0.0) == 0.0);
}
