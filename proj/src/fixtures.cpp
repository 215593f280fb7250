#include "notegate/fixtures.hpp"

#include <cmath>
#include <filesystem>

#include "notegate/decode.hpp"
#include "notegate/ioutil.hpp"

namespace notegate {

std::vector<FixtureNote> default_fixture_notes()
{
    return {
        {0.30, 0.70, 220.0},
        {1.00, 1.50, 330.0},
        {1.80, 2.30, 440.0},
    };
}

AudioClip render_note_clip(std::span<const FixtureNote> notes, int sample_rate,
                           double tail_seconds, double amplitude)
{
    double end = tail_seconds;
    for (const auto& n : notes) end = std::max(end, n.offset + tail_seconds);

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<std::size_t>(std::ceil(end * sample_rate)), 0.0);
    // Raised-cosine edges: an abruptly gated sine is a broadband click that
    // leaks energy into every mel bin and confuses transition detectors.
    const auto fade = static_cast<std::size_t>(0.010 * sample_rate);
    for (const auto& n : notes) {
        const auto a = static_cast<std::size_t>(std::lround(n.onset * sample_rate));
        const auto b = std::min(clip.samples.size(),
                                static_cast<std::size_t>(std::lround(n.offset * sample_rate)));
        for (std::size_t i = a; i < b; ++i) {
            const double t = static_cast<double>(i - a) / sample_rate;
            double gain = 1.0;
            if (i - a < fade)
                gain = 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(i - a) / fade));
            if (b - 1 - i < fade)
                gain = std::min(gain, 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(b - 1 - i) /
                                                            fade)));
            clip.samples[i] = gain * amplitude * std::sin(2.0 * M_PI * n.freq_hz * t);
        }
    }
    return clip;
}

std::vector<NoteEvent> fixture_ground_truth(std::span<const FixtureNote> notes)
{
    std::vector<NoteEvent> out;
    for (const auto& n : notes) out.push_back({n.onset, n.offset, midi_from_hz(n.freq_hz)});
    return out;
}

PhonemeInventory tiny_inventory()
{
    return PhonemeInventory{{"AA", "IY", "N", "S"}};
}

namespace {

Tensor zeros(std::vector<std::size_t> shape)
{
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(t.size(), 0.0f);
    return t;
}

} // namespace

void make_tiny_phoneme_model(std::size_t num_phonemes, ModelGraph& graph, WeightStore& weights)
{
    graph = ModelGraph{};
    graph.name = "tiny_phoneme";
    BranchSpec mel;
    mel.name = "mel";
    mel.input = "mel";
    mel.input_bins = 80;
    LayerSpec feat;
    feat.kind = LayerSpec::Kind::dense;
    feat.name = "feat";
    feat.units = 2;
    mel.layers.push_back(feat);
    graph.branches.push_back(mel);

    LayerSpec out;
    out.kind = LayerSpec::Kind::dense;
    out.name = "out";
    out.units = static_cast<int>(num_phonemes + 1);
    out.activation = Activation::softmax;
    graph.head.push_back(out);

    weights = WeightStore{};
    weights.put("mel.feat.weight", zeros({2, 80}));
    weights.put("mel.feat.bias", zeros({2}));
    weights.put("head.out.weight", zeros({num_phonemes + 1, 2}));
    weights.put("head.out.bias", zeros({num_phonemes + 1}));
}

void make_tiny_note_model(ModelGraph& graph, WeightStore& weights)
{
    graph = ModelGraph{};
    graph.name = "tiny_note";

    BranchSpec mel;
    mel.name = "mel";
    mel.input = "mel";
    mel.input_bins = 80;

    LayerSpec diff;
    diff.kind = LayerSpec::Kind::conv2d;
    diff.name = "diff";
    diff.channels = 3;
    diff.kernel_t = 3;
    diff.kernel_f = 1;
    diff.dilation_t = 2;
    diff.dilation_f = 1;
    mel.layers.push_back(diff);

    LayerSpec pool;
    pool.kind = LayerSpec::Kind::maxpool;
    pool.name = "pool";
    pool.pool_t = 1;
    pool.pool_f = 80; // frequency max over the whole axis
    mel.layers.push_back(pool);

    LayerSpec feat;
    feat.kind = LayerSpec::Kind::dense;
    feat.name = "feat";
    feat.units = 3;
    mel.layers.push_back(feat);
    graph.branches.push_back(mel);

    BranchSpec ppg;
    ppg.name = "ppg";
    ppg.input = "ppg";
    ppg.input_bins = 5;
    LayerSpec pfeat = feat;
    pfeat.units = 1;
    ppg.layers.push_back(pfeat);
    graph.branches.push_back(ppg);

    LayerSpec out;
    out.kind = LayerSpec::Kind::dense;
    out.name = "out";
    out.units = 3;
    out.activation = Activation::sigmoid;
    graph.head.push_back(out);

    weights = WeightStore{};

    // Conv taps hit frames t-2, t, t+2. Channel 0 copies the cell, channel 1
    // is the rise x[t] - x[t-2], channel 2 the fall x[t-2] - x[t].
    Tensor kernel = zeros({3, 1, 3, 1});
    kernel.data[0 * 3 + 1] = 1.0f;  // copy: center tap
    kernel.data[1 * 3 + 0] = -1.0f; // rise: -past
    kernel.data[1 * 3 + 1] = 1.0f;  //       +present
    kernel.data[2 * 3 + 0] = 1.0f;  // fall: +past
    kernel.data[2 * 3 + 1] = -1.0f; //       -present
    weights.put("mel.diff.kernel", std::move(kernel));
    weights.put("mel.diff.bias", zeros({3}));

    // After the full-axis max pool each frame is the 3-vector
    // (max log-mel, max rise, max fall); the dense layer passes it through.
    Tensor sel = zeros({3, 3});
    sel.data[0 * 3 + 0] = 1.0f;
    sel.data[1 * 3 + 1] = 1.0f;
    sel.data[2 * 3 + 2] = 1.0f;
    weights.put("mel.feat.weight", std::move(sel));
    weights.put("mel.feat.bias", zeros({3}));

    weights.put("ppg.feat.weight", zeros({1, 5}));
    weights.put("ppg.feat.bias", zeros({1}));

    // Head input is (max log-mel, max rise, max fall, 0). Silent frames sit
    // near log(1e-10) = -23, tone frames near or above 0, so -7.5 splits
    // them for the activation output. Genuine tone-bin rises and falls swing
    // about 30; residual edge splatter in far bins stays near 10, so the
    // onset/offset rows need a swing above 16.5 to clear the 0.2 decode
    // threshold.
    Tensor head = zeros({3, 4});
    Tensor head_bias = zeros({3});
    head.data[0 * 4 + 1] = 0.4f; // onset  <- rise
    head_bias.data[0] = -8.0f;
    head.data[1 * 4 + 2] = 0.4f; // offset <- fall
    head_bias.data[1] = -8.0f;
    head.data[2 * 4 + 0] = 0.5f; // activation <- energy
    head_bias.data[2] = 3.75f;   // centers the cutoff at log-mel -7.5
    weights.put("head.out.weight", std::move(head));
    weights.put("head.out.bias", std::move(head_bias));
}

FixturePaths write_fixture_set(const std::string& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto at = [&](const char* name) { return (fs::path(dir) / name).string(); };

    FixturePaths paths;
    paths.wav = at("three_notes.wav");
    paths.notes = at("three_notes_ref.tsv");
    paths.inventory = at("inventory.txt");
    paths.phoneme_graph = at("phoneme_graph.json");
    paths.phoneme_weights = at("phoneme_weights.json");
    paths.note_graph = at("note_graph.json");
    paths.note_weights = at("note_weights.json");

    const auto notes = default_fixture_notes();
    save_wav(paths.wav, render_note_clip(notes));
    write_notes_tsv(paths.notes, fixture_ground_truth(notes));

    const auto inv = tiny_inventory();
    std::string inv_text;
    for (const auto& s : inv.symbols) inv_text += s + "\n";
    write_file_atomic(paths.inventory, inv_text);

    ModelGraph pg;
    WeightStore pw;
    make_tiny_phoneme_model(inv.size(), pg, pw);
    write_file_atomic(paths.phoneme_graph, pg.to_json_string());
    pw.save(paths.phoneme_weights);

    ModelGraph ng;
    WeightStore nw;
    make_tiny_note_model(ng, nw);
    write_file_atomic(paths.note_graph, ng.to_json_string());
    nw.save(paths.note_weights);
    return paths;
}

} // namespace notegate
