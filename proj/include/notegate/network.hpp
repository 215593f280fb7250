#pragma once

#include <map>
#include <string>
#include <vector>

#include "notegate/matrix.hpp"
#include "notegate/mel.hpp"
#include "notegate/phoneme.hpp"

namespace notegate {

enum class Activation { linear, relu, tanh, sigmoid, softmax };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// One layer of a branch or head. Convolutions are same-padded on both axes
// (odd kernels only) so the time dimension is preserved end to end; pooling
// may only stride the frequency axis.
struct LayerSpec {
    enum class Kind { conv2d, maxpool, dropout, dense, bilstm };

    Kind kind = Kind::dense;
    std::string name;
    int channels = 0;                    // conv2d
    int kernel_t = 1, kernel_f = 1;      // conv2d
    int dilation_t = 1, dilation_f = 1;  // conv2d
    int pool_t = 1, pool_f = 1;          // maxpool
    double rate = 0.0;                   // dropout (identity at inference)
    int units = 0;                       // dense / bilstm
    Activation activation = Activation::linear;
};

struct BranchSpec {
    std::string name;
    std::string input; // "mel" or "ppg"
    int input_bins = 0;
    std::vector<LayerSpec> layers;
};

// Branch networks whose per-frame outputs are concatenated and fed to the
// head stack. JSON on disk; see configs/ for the defaults.
struct ModelGraph {
    std::string name;
    std::vector<BranchSpec> branches;
    std::vector<LayerSpec> head;

    static ModelGraph load(const std::string& path);
    static ModelGraph parse_json(const std::string& text, const std::string& origin);
    std::string to_json_string() const;

    const BranchSpec* find_branch(const std::string& input) const;
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t size() const;
    bool operator==(const Tensor&) const = default;
};

// Named float32 tensors. On disk: a JSON manifest (name -> shape/offset) next
// to a single little-endian raw blob.
class WeightStore {
public:
    static WeightStore load(const std::string& manifest_path);
    void save(const std::string& manifest_path) const;

    void put(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    std::vector<std::string> names() const;
    std::size_t count() const { return tensors_.size(); }
    bool operator==(const WeightStore&) const = default;

private:
    std::map<std::string, Tensor> tensors_;
};

struct ValidationReport {
    std::vector<std::string> issues; // one line per missing/extra/mis-shaped tensor

    bool ok() const { return issues.empty(); }
    std::string summary() const;
};

// Expected tensor names and shapes for a graph, in deterministic order.
// Conventions: conv2d kernel [out_ch, in_ch, kt, kf] + bias [out_ch];
// dense weight [units, in_dim] + bias [units]; bilstm fw/bw each kernel
// [4u, in_dim], recurrent [4u, u], bias [4u] with gate order i, f, g, o.
// Dense input flattening is freq-major (index = f * channels + c).
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(
    const ModelGraph& graph);

ValidationReport validate(const ModelGraph& graph, const WeightStore& weights);

// Dual-input forward pass; returns T x 3 onset/offset/activation
// probabilities on the shared frame grid. The head must end in dense(3,
// sigmoid).
FramedMatrix forward_note_model(const MelSpectrogram& mel, const Posteriorgram& ppg,
                                const ModelGraph& graph, const WeightStore& weights);

// Single-branch forward pass ending in a softmax head with K+1 units.
Posteriorgram forward_phoneme_model(const MelSpectrogram& mel, const ModelGraph& graph,
                                    const WeightStore& weights, const PhonemeInventory& inventory);

} // namespace notegate
