#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "notegate/fixtures.hpp"
#include "notegate/network.hpp"
#include "test_support.hpp"

using namespace notegate;

namespace {

MelSpectrogram mel_of(const Matrix& m)
{
    MelSpectrogram mel;
    mel.frames = m;
    return mel;
}

Posteriorgram uniform_ppg(std::size_t frames, const PhonemeInventory& inv)
{
    Posteriorgram ppg;
    ppg.inventory = inv;
    ppg.frames = Matrix(frames, inv.num_classes(), 1.0 / inv.num_classes());
    return ppg;
}

// Minimal single-branch graph: one 3x1 time conv (dilation 2), an identity
// dense, and a sigmoid head reading the conv response.
void impulse_probe_model(float tap_past, float tap_center, float tap_future, ModelGraph& graph,
                         WeightStore& weights)
{
    BranchSpec mel;
    mel.name = "mel";
    mel.input = "mel";
    mel.input_bins = 1;

    LayerSpec conv;
    conv.kind = LayerSpec::Kind::conv2d;
    conv.name = "probe";
    conv.channels = 1;
    conv.kernel_t = 3;
    conv.kernel_f = 1;
    conv.dilation_t = 2;
    mel.layers.push_back(conv);

    graph = ModelGraph{};
    graph.name = "impulse_probe";
    graph.branches.push_back(mel);

    LayerSpec out;
    out.kind = LayerSpec::Kind::dense;
    out.name = "out";
    out.units = 3;
    out.activation = Activation::sigmoid;
    graph.head.push_back(out);

    weights = WeightStore{};
    Tensor kernel{{1, 1, 3, 1}, {tap_past, tap_center, tap_future}};
    weights.put("mel.probe.kernel", kernel);
    weights.put("mel.probe.bias", Tensor{{1}, {0.0f}});
    Tensor head{{3, 1}, {1.0f, 0.0f, 0.0f}};
    weights.put("head.out.weight", head);
    weights.put("head.out.bias", Tensor{{3}, {0.0f, 0.0f, 0.0f}});
}

} // namespace

TEST_CASE("note model output is T x 3 inside (0, 1) and all-zero weights give 0.5")
{
    ModelGraph graph;
    WeightStore weights;
    make_tiny_note_model(graph, weights);

    MelSpectrogram mel = mel_of(Matrix(100, 80, -3.0));
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> uni(-23.0, 5.0);
    for (auto& v : mel.frames.values()) v = uni(rng);
    const Posteriorgram ppg = uniform_ppg(100, tiny_inventory());

    const FramedMatrix out = forward_note_model(mel, ppg, graph, weights);
    CHECK(out.m.rows() == 100);
    CHECK(out.m.cols() == 3);
    for (double v : out.m.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    // Zero every tensor: the sigmoid head collapses to one half.
    WeightStore zeroed;
    for (const auto& name : weights.names()) {
        Tensor t = weights.get(name);
        std::fill(t.data.begin(), t.data.end(), 0.0f);
        zeroed.put(name, t);
    }
    const FramedMatrix flat = forward_note_model(mel, ppg, graph, zeroed);
    for (double v : flat.m.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("phoneme model rows are stochastic; zero weights give the uniform row")
{
    ModelGraph graph;
    WeightStore weights;
    make_tiny_phoneme_model(39, graph, weights);
    PhonemeInventory inv;
    for (int i = 0; i < 39; ++i) inv.symbols.push_back("p" + std::to_string(i));

    const MelSpectrogram mel = mel_of(Matrix(50, 80, -1.0));
    const Posteriorgram ppg = forward_phoneme_model(mel, graph, weights, inv);
    CHECK(ppg.frames.rows() == 50); // time preserved
    CHECK(ppg.frames.cols() == 40);
    ppg.validate();
    for (double v : ppg.frames.values()) CHECK(v == doctest::Approx(1.0 / 40).epsilon(1e-9));
}

TEST_CASE("dilated conv responds exactly two frames away per tap")
{
    const std::size_t t0 = 10;
    Matrix impulse(21, 1, 0.0);
    impulse(t0, 0) = 1.0;

    struct Probe {
        float past, center, future;
        long long expected_offset;
    };
    for (const Probe& probe : {Probe{1, 0, 0, +2}, Probe{0, 1, 0, 0}, Probe{0, 0, 1, -2}}) {
        ModelGraph graph;
        WeightStore weights;
        impulse_probe_model(probe.past, probe.center, probe.future, graph, weights);
        const Posteriorgram ppg = uniform_ppg(21, tiny_inventory());
        const FramedMatrix out =
            forward_note_model(mel_of(impulse), ppg, graph, weights);
        for (std::size_t t = 0; t < 21; ++t) {
            const bool hit = static_cast<long long>(t) ==
                             static_cast<long long>(t0) + probe.expected_offset;
            if (hit)
                CHECK(out.m(t, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
            else
                CHECK(out.m(t, 0) == doctest::Approx(0.5));
        }
    }
}

TEST_CASE("time-reversing a bilstm equals swapping its directions")
{
    const std::size_t T = 7, D = 2, U = 3;
    std::mt19937 rng(8);
    std::uniform_real_distribution<float> uni(-0.7f, 0.7f);
    auto rand_tensor = [&](std::vector<std::size_t> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(t.size());
        for (auto& v : t.data) v = uni(rng);
        return t;
    };

    ModelGraph graph;
    graph.name = "bilstm_probe";
    BranchSpec mel;
    mel.name = "mel";
    mel.input = "mel";
    mel.input_bins = static_cast<int>(D);
    LayerSpec dense_in;
    dense_in.kind = LayerSpec::Kind::dense;
    dense_in.name = "in";
    dense_in.units = static_cast<int>(D);
    mel.layers.push_back(dense_in);
    LayerSpec rnn;
    rnn.kind = LayerSpec::Kind::bilstm;
    rnn.name = "rnn";
    rnn.units = static_cast<int>(U);
    mel.layers.push_back(rnn);
    graph.branches.push_back(mel);
    LayerSpec out;
    out.kind = LayerSpec::Kind::dense;
    out.name = "out";
    out.units = 3;
    out.activation = Activation::sigmoid;
    graph.head.push_back(out);

    // Identity input dense; head reads one unit from each half so swapped
    // directions are visible.
    WeightStore base;
    Tensor ident{{D, D}, {1, 0, 0, 1}};
    base.put("mel.in.weight", ident);
    base.put("mel.in.bias", Tensor{{D}, std::vector<float>(D, 0.0f)});
    const Tensor fw_k = rand_tensor({4 * U, D}), fw_r = rand_tensor({4 * U, U}),
                 fw_b = rand_tensor({4 * U});
    const Tensor bw_k = rand_tensor({4 * U, D}), bw_r = rand_tensor({4 * U, U}),
                 bw_b = rand_tensor({4 * U});
    base.put("mel.rnn.fw.kernel", fw_k);
    base.put("mel.rnn.fw.recurrent", fw_r);
    base.put("mel.rnn.fw.bias", fw_b);
    base.put("mel.rnn.bw.kernel", bw_k);
    base.put("mel.rnn.bw.recurrent", bw_r);
    base.put("mel.rnn.bw.bias", bw_b);
    Tensor head = rand_tensor({3, 2 * U});
    base.put("head.out.weight", head);
    base.put("head.out.bias", rand_tensor({3}));

    WeightStore swapped;
    for (const auto& name : base.names()) swapped.put(name, base.get(name));
    swapped.put("mel.rnn.fw.kernel", bw_k);
    swapped.put("mel.rnn.fw.recurrent", bw_r);
    swapped.put("mel.rnn.fw.bias", bw_b);
    swapped.put("mel.rnn.bw.kernel", fw_k);
    swapped.put("mel.rnn.bw.recurrent", fw_r);
    swapped.put("mel.rnn.bw.bias", fw_b);
    // Swapping directions also swaps the two halves of the concatenated
    // output, so the head must read the halves swapped too.
    Tensor head_swapped = head;
    for (std::size_t row = 0; row < 3; ++row)
        for (std::size_t u = 0; u < U; ++u)
            std::swap(head_swapped.data[row * 2 * U + u], head_swapped.data[row * 2 * U + U + u]);
    swapped.put("head.out.weight", head_swapped);

    Matrix x(T, D);
    std::uniform_real_distribution<double> xs(-1.0, 1.0);
    for (auto& v : x.values()) v = xs(rng);
    Matrix x_rev(T, D);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) x_rev(t, d) = x(T - 1 - t, d);

    const Posteriorgram ppg = uniform_ppg(T, tiny_inventory());
    const FramedMatrix a = forward_note_model(mel_of(x_rev), ppg, graph, base);
    const FramedMatrix b = forward_note_model(mel_of(x), ppg, graph, swapped);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(a.m(T - 1 - t, c) == doctest::Approx(b.m(t, c)).epsilon(1e-9));
}

TEST_CASE("hand-computed forward pass on a one-unit recurrent model")
{
    // 1x1 identity conv, identity dense, one-unit LSTM (forward weights set,
    // backward zero), head passing the forward unit through a sigmoid.
    ModelGraph graph;
    graph.name = "hand";
    BranchSpec mel;
    mel.name = "mel";
    mel.input = "mel";
    mel.input_bins = 1;
    LayerSpec conv;
    conv.kind = LayerSpec::Kind::conv2d;
    conv.name = "id";
    conv.channels = 1;
    conv.kernel_t = 1;
    conv.kernel_f = 1;
    mel.layers.push_back(conv);
    LayerSpec dense_in;
    dense_in.kind = LayerSpec::Kind::dense;
    dense_in.name = "in";
    dense_in.units = 1;
    mel.layers.push_back(dense_in);
    LayerSpec rnn;
    rnn.kind = LayerSpec::Kind::bilstm;
    rnn.name = "rnn";
    rnn.units = 1;
    mel.layers.push_back(rnn);
    graph.branches.push_back(mel);
    LayerSpec out;
    out.kind = LayerSpec::Kind::dense;
    out.name = "out";
    out.units = 3;
    out.activation = Activation::sigmoid;
    graph.head.push_back(out);

    const float wi = 0.5f, wf = -0.3f, wg = 0.8f, wo = 0.2f;
    const float ri = 0.1f, rf = 0.4f, rg = -0.2f, ro = 0.3f;
    const float bi = 0.05f, bf = 0.1f, bg = -0.05f, bo = 0.0f;

    WeightStore weights;
    weights.put("mel.id.kernel", Tensor{{1, 1, 1, 1}, {1.0f}});
    weights.put("mel.id.bias", Tensor{{1}, {0.0f}});
    weights.put("mel.in.weight", Tensor{{1, 1}, {1.0f}});
    weights.put("mel.in.bias", Tensor{{1}, {0.0f}});
    weights.put("mel.rnn.fw.kernel", Tensor{{4, 1}, {wi, wf, wg, wo}});
    weights.put("mel.rnn.fw.recurrent", Tensor{{4, 1}, {ri, rf, rg, ro}});
    weights.put("mel.rnn.fw.bias", Tensor{{4}, {bi, bf, bg, bo}});
    weights.put("mel.rnn.bw.kernel", Tensor{{4, 1}, {0, 0, 0, 0}});
    weights.put("mel.rnn.bw.recurrent", Tensor{{4, 1}, {0, 0, 0, 0}});
    weights.put("mel.rnn.bw.bias", Tensor{{4}, {0, 0, 0, 0}});
    weights.put("head.out.weight", Tensor{{3, 2}, {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f}});
    weights.put("head.out.bias", Tensor{{3}, {0.0f, 0.0f, 0.0f}});

    const std::vector<double> xs{0.5, -1.0, 0.25};
    Matrix x(3, 1);
    for (std::size_t t = 0; t < 3; ++t) x(t, 0) = xs[t];

    // Independent scalar re-execution of the same arithmetic.
    auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double h = 0.0, c = 0.0;
    std::vector<double> expect;
    for (double xv : xs) {
        const double i_g = sigm(wi * xv + ri * h + bi);
        const double f_g = sigm(wf * xv + rf * h + bf);
        const double g_g = std::tanh(wg * xv + rg * h + bg);
        const double o_g = sigm(wo * xv + ro * h + bo);
        c = f_g * c + i_g * g_g;
        h = o_g * std::tanh(c);
        expect.push_back(sigm(h));
    }

    const Posteriorgram ppg = uniform_ppg(3, tiny_inventory());
    const FramedMatrix result = forward_note_model(mel_of(x), ppg, graph, weights);
    for (std::size_t t = 0; t < 3; ++t)
        CHECK(result.m(t, 0) == doctest::Approx(expect[t]).epsilon(1e-6));
}

TEST_CASE("weights round-trip bit-exactly and validation names offenders")
{
    testsupport::TempDir tmp("weights");
    ModelGraph graph;
    WeightStore weights;
    make_tiny_note_model(graph, weights);

    const std::string manifest = tmp.path("model.json");
    weights.save(manifest);
    const WeightStore back = WeightStore::load(manifest);
    CHECK(back == weights);
    CHECK(validate(graph, back).ok());

    // Remove one tensor: the report cites exactly that name.
    WeightStore missing;
    for (const auto& name : weights.names())
        if (name != "mel.feat.bias") missing.put(name, weights.get(name));
    const ValidationReport r1 = validate(graph, missing);
    REQUIRE(r1.issues.size() == 1);
    CHECK(r1.issues[0].find("mel.feat.bias") != std::string::npos);
    CHECK(r1.issues[0].find("missing") != std::string::npos);

    // Transpose one tensor: the report cites expected vs actual dims.
    WeightStore transposed;
    for (const auto& name : weights.names()) transposed.put(name, weights.get(name));
    Tensor t = weights.get("head.out.weight");
    std::swap(t.shape[0], t.shape[1]);
    transposed.put("head.out.weight", t);
    const ValidationReport r2 = validate(graph, transposed);
    REQUIRE(r2.issues.size() == 1);
    CHECK(r2.issues[0].find("head.out.weight") != std::string::npos);
    CHECK(r2.issues[0].find("[4,3]") != std::string::npos);
    CHECK(r2.issues[0].find("[3,4]") != std::string::npos);

    // Extra tensor.
    WeightStore extra;
    for (const auto& name : weights.names()) extra.put(name, weights.get(name));
    extra.put("stray.tensor", Tensor{{1}, {0.0f}});
    const ValidationReport r3 = validate(graph, extra);
    REQUIRE(r3.issues.size() == 1);
    CHECK(r3.issues[0].find("stray.tensor") != std::string::npos);

    MelSpectrogram mel = mel_of(Matrix(10, 80, -3.0));
    const Posteriorgram ppg = uniform_ppg(10, tiny_inventory());
    CHECK_THROWS_AS(forward_note_model(mel, ppg, graph, missing), DataError);
}

TEST_CASE("forward passes are deterministic")
{
    ModelGraph graph;
    WeightStore weights;
    make_tiny_note_model(graph, weights);
    MelSpectrogram mel = mel_of(Matrix(30, 80, 0.0));
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> uni(-20.0, 5.0);
    for (auto& v : mel.frames.values()) v = uni(rng);
    const Posteriorgram ppg = uniform_ppg(30, tiny_inventory());
    const FramedMatrix a = forward_note_model(mel, ppg, graph, weights);
    const FramedMatrix b = forward_note_model(mel, ppg, graph, weights);
    CHECK(a.m == b.m);
}

TEST_CASE("input frame-count mismatch is rejected")
{
    ModelGraph graph;
    WeightStore weights;
    make_tiny_note_model(graph, weights);
    MelSpectrogram mel = mel_of(Matrix(10, 80, 0.0));
    const Posteriorgram ppg = uniform_ppg(11, tiny_inventory());
    CHECK_THROWS_AS(forward_note_model(mel, ppg, graph, weights), DataError);
}

namespace {

WeightStore random_weights_for(const ModelGraph& graph, std::uint32_t seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> uni(-0.05f, 0.05f);
    WeightStore weights;
    for (const auto& [name, shape] : expected_tensors(graph)) {
        Tensor t;
        t.shape = shape;
        t.data.resize(t.size());
        for (auto& v : t.data) v = uni(rng);
        weights.put(name, t);
    }
    return weights;
}

} // namespace

TEST_CASE("the shipped default graphs parse, validate and run")
{
    const char* root = std::getenv("NOTEGATE_SOURCE_DIR");
    REQUIRE(root != nullptr);
    const std::string configs = std::string(root) + "/configs";

    const ModelGraph note_graph = ModelGraph::load(configs + "/note_graph.json");
    const WeightStore note_weights = random_weights_for(note_graph, 99);
    CHECK(validate(note_graph, note_weights).ok());

    const ModelGraph phoneme_graph = ModelGraph::load(configs + "/phoneme_graph.json");
    const WeightStore phoneme_weights = random_weights_for(phoneme_graph, 100);
    CHECK(validate(phoneme_graph, phoneme_weights).ok());

    PhonemeInventory inv = PhonemeInventory::load(configs + "/cmu39.txt");
    CHECK(inv.size() == 39);

    MelSpectrogram mel = mel_of(Matrix(3, 80));
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> uni(-20.0, 3.0);
    for (auto& v : mel.frames.values()) v = uni(rng);

    const Posteriorgram ppg = forward_phoneme_model(mel, phoneme_graph, phoneme_weights, inv);
    CHECK(ppg.frames.rows() == 3);
    CHECK(ppg.frames.cols() == 40);
    ppg.validate();

    const FramedMatrix out = forward_note_model(mel, ppg, note_graph, note_weights);
    CHECK(out.m.rows() == 3);
    CHECK(out.m.cols() == 3);
    for (double v : out.m.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}
