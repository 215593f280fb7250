#include "notegate/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>

#include <Eigen/Dense>
#include <json.hpp>

#include "notegate/ioutil.hpp"

namespace notegate {

using nlohmann::json;

namespace {

// A branch starts as a T x F x C feature map (C = 1); a dense layer flattens
// each frame to a vector and everything after runs on T x D sequences.
struct FeatMap {
    std::size_t T = 0, F = 0, C = 0;
    std::vector<double> v;

    double at(std::size_t t, std::size_t f, std::size_t c) const
    {
        return v[(t * F + f) * C + c];
    }
    double& at(std::size_t t, std::size_t f, std::size_t c) { return v[(t * F + f) * C + c]; }
};

struct Seq {
    std::size_t T = 0, D = 0;
    std::vector<double> v;

    double at(std::size_t t, std::size_t d) const { return v[t * D + d]; }
    double& at(std::size_t t, std::size_t d) { return v[t * D + d]; }
};

double apply_act(Activation a, double x)
{
    switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::softmax: break;
    }
    throw Error("softmax is only valid as a dense-layer activation");
}

} // namespace

Activation activation_from_string(const std::string& name)
{
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softmax") return Activation::softmax;
    throw DataError(cat("unknown activation: '", name, "'"));
}

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    }
    return "?";
}

namespace {

LayerSpec parse_layer(const json& j, const std::string& where)
{
    LayerSpec spec;
    if (!j.contains("name") || !j["name"].is_string())
        throw DataError(cat(where, ": layer missing a name"));
    spec.name = j["name"].get<std::string>();
    const std::string kind = j.value("kind", "");
    const std::string ctx = cat(where, " layer '", spec.name, "'");

    auto int_field = [&](const char* key, int fallback) {
        return j.contains(key) ? j[key].get<int>() : fallback;
    };
    auto pair_field = [&](const char* key, int& a, int& b) {
        if (!j.contains(key)) return;
        const auto& arr = j[key];
        if (!arr.is_array() || arr.size() != 2)
            throw DataError(cat(ctx, ": '", key, "' must be [time, freq]"));
        a = arr[0].get<int>();
        b = arr[1].get<int>();
    };

    if (j.contains("activation"))
        spec.activation = activation_from_string(j["activation"].get<std::string>());

    if (kind == "conv2d") {
        spec.kind = LayerSpec::Kind::conv2d;
        spec.channels = int_field("channels", 0);
        spec.kernel_t = spec.kernel_f = 3;
        pair_field("kernel", spec.kernel_t, spec.kernel_f);
        pair_field("dilation", spec.dilation_t, spec.dilation_f);
        if (spec.channels <= 0) throw DataError(cat(ctx, ": conv2d needs positive channels"));
        if (spec.kernel_t <= 0 || spec.kernel_f <= 0)
            throw DataError(cat(ctx, ": kernel dims must be positive"));
        if (spec.kernel_t % 2 == 0 || spec.kernel_f % 2 == 0)
            throw DataError(cat(ctx, ": kernels must be odd for same-padding"));
        if (spec.dilation_t < 1 || spec.dilation_f < 1)
            throw DataError(cat(ctx, ": dilation must be >= 1"));
    } else if (kind == "maxpool") {
        spec.kind = LayerSpec::Kind::maxpool;
        pair_field("pool", spec.pool_t, spec.pool_f);
        if (spec.pool_t != 1)
            throw DataError(cat(ctx, ": pooling the time axis would break frame alignment"));
        if (spec.pool_f < 1) throw DataError(cat(ctx, ": pool size must be >= 1"));
    } else if (kind == "dropout") {
        spec.kind = LayerSpec::Kind::dropout;
        spec.rate = j.value("rate", 0.0);
    } else if (kind == "dense") {
        spec.kind = LayerSpec::Kind::dense;
        spec.units = int_field("units", 0);
        if (spec.units <= 0) throw DataError(cat(ctx, ": dense needs positive units"));
    } else if (kind == "bilstm") {
        spec.kind = LayerSpec::Kind::bilstm;
        spec.units = int_field("units", 0);
        if (spec.units <= 0) throw DataError(cat(ctx, ": bilstm needs positive units"));
        if (spec.activation != Activation::linear)
            throw DataError(cat(ctx, ": bilstm does not take an activation"));
    } else {
        throw DataError(cat(ctx, ": unknown layer kind '", kind, "'"));
    }
    return spec;
}

void check_layer_order(const std::vector<LayerSpec>& layers, bool starts_flat,
                       const std::string& where)
{
    bool flat = starts_flat;
    std::vector<std::string> seen;
    for (const auto& l : layers) {
        if (std::find(seen.begin(), seen.end(), l.name) != seen.end())
            throw DataError(cat(where, ": duplicate layer name '", l.name, "'"));
        seen.push_back(l.name);
        switch (l.kind) {
        case LayerSpec::Kind::conv2d:
        case LayerSpec::Kind::maxpool:
            if (flat)
                throw DataError(cat(where, " layer '", l.name,
                                    "': conv/pool cannot follow a dense or bilstm layer"));
            break;
        case LayerSpec::Kind::bilstm:
            if (!flat)
                throw DataError(cat(where, " layer '", l.name,
                                    "': bilstm needs a dense layer before it"));
            break;
        case LayerSpec::Kind::dense:
            flat = true;
            break;
        case LayerSpec::Kind::dropout:
            break;
        }
        if (l.activation == Activation::softmax && l.kind != LayerSpec::Kind::dense)
            throw DataError(cat(where, " layer '", l.name, "': softmax requires a dense layer"));
    }
}

} // namespace

const BranchSpec* ModelGraph::find_branch(const std::string& input) const
{
    for (const auto& b : branches)
        if (b.input == input) return &b;
    return nullptr;
}

ModelGraph ModelGraph::parse_json(const std::string& text, const std::string& origin)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(cat(origin, ": invalid JSON: ", e.what()));
    }

    ModelGraph g;
    g.name = j.value("name", "model");
    if (!j.contains("branches") || !j["branches"].is_array() || j["branches"].empty())
        throw DataError(cat(origin, ": graph needs a non-empty 'branches' array"));
    for (const auto& jb : j["branches"]) {
        BranchSpec b;
        b.name = jb.value("name", "");
        b.input = jb.value("input", "");
        b.input_bins = jb.value("input_bins", 0);
        if (b.name.empty()) throw DataError(cat(origin, ": branch missing a name"));
        if (b.input != "mel" && b.input != "ppg")
            throw DataError(cat(origin, ": branch '", b.name, "' input must be 'mel' or 'ppg'"));
        if (b.input_bins <= 0)
            throw DataError(cat(origin, ": branch '", b.name, "' needs positive input_bins"));
        for (const auto& jl : jb.value("layers", json::array()))
            b.layers.push_back(parse_layer(jl, cat(origin, " branch '", b.name, "'")));
        check_layer_order(b.layers, false, cat(origin, " branch '", b.name, "'"));
        for (const auto& other : g.branches)
            if (other.name == b.name)
                throw DataError(cat(origin, ": duplicate branch name '", b.name, "'"));
        g.branches.push_back(std::move(b));
    }
    if (!j.contains("head") || !j["head"].is_object())
        throw DataError(cat(origin, ": graph needs a 'head' object"));
    for (const auto& jl : j["head"].value("layers", json::array()))
        g.head.push_back(parse_layer(jl, cat(origin, " head")));
    if (g.head.empty()) throw DataError(cat(origin, ": head needs at least one layer"));
    check_layer_order(g.head, true, cat(origin, " head"));
    return g;
}

ModelGraph ModelGraph::load(const std::string& path)
{
    return parse_json(read_file(path), path);
}

namespace {

json layer_to_json(const LayerSpec& l)
{
    json j;
    j["name"] = l.name;
    switch (l.kind) {
    case LayerSpec::Kind::conv2d:
        j["kind"] = "conv2d";
        j["channels"] = l.channels;
        j["kernel"] = {l.kernel_t, l.kernel_f};
        j["dilation"] = {l.dilation_t, l.dilation_f};
        j["activation"] = to_string(l.activation);
        break;
    case LayerSpec::Kind::maxpool:
        j["kind"] = "maxpool";
        j["pool"] = {l.pool_t, l.pool_f};
        break;
    case LayerSpec::Kind::dropout:
        j["kind"] = "dropout";
        j["rate"] = l.rate;
        break;
    case LayerSpec::Kind::dense:
        j["kind"] = "dense";
        j["units"] = l.units;
        j["activation"] = to_string(l.activation);
        break;
    case LayerSpec::Kind::bilstm:
        j["kind"] = "bilstm";
        j["units"] = l.units;
        break;
    }
    return j;
}

} // namespace

std::string ModelGraph::to_json_string() const
{
    json j;
    j["name"] = name;
    j["branches"] = json::array();
    for (const auto& b : branches) {
        json jb;
        jb["name"] = b.name;
        jb["input"] = b.input;
        jb["input_bins"] = b.input_bins;
        jb["layers"] = json::array();
        for (const auto& l : b.layers) jb["layers"].push_back(layer_to_json(l));
        j["branches"].push_back(jb);
    }
    j["head"]["layers"] = json::array();
    for (const auto& l : head) j["head"]["layers"].push_back(layer_to_json(l));
    return j.dump(2) + "\n";
}

std::size_t Tensor::size() const
{
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void WeightStore::put(const std::string& name, Tensor t)
{
    if (t.size() != t.data.size())
        throw DataError(cat("tensor '", name, "' data does not match its shape"));
    tensors_[name] = std::move(t);
}

const Tensor* WeightStore::find(const std::string& name) const
{
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
}

const Tensor& WeightStore::get(const std::string& name) const
{
    const Tensor* t = find(name);
    if (!t) throw DataError(cat("missing tensor '", name, "'"));
    return *t;
}

std::vector<std::string> WeightStore::names() const
{
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) out.push_back(name);
    return out;
}

WeightStore WeightStore::load(const std::string& manifest_path)
{
    json j;
    try {
        j = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError(cat(manifest_path, ": invalid JSON: ", e.what()));
    }
    if (j.value("version", 0) != 1)
        throw DataError(cat(manifest_path, ": unsupported weights manifest version"));
    const std::string blob_name = j.value("blob", "");
    if (blob_name.empty()) throw DataError(cat(manifest_path, ": manifest missing 'blob'"));

    namespace fs = std::filesystem;
    const fs::path blob_path = fs::path(manifest_path).parent_path() / blob_name;
    const std::string blob = read_file(blob_path.string());

    WeightStore store;
    for (const auto& jt : j.value("tensors", json::array())) {
        Tensor t;
        const std::string name = jt.value("name", "");
        if (name.empty()) throw DataError(cat(manifest_path, ": tensor entry missing 'name'"));
        const std::string dtype = jt.value("dtype", "float32");
        if (dtype != "float32")
            throw DataError(cat(manifest_path, ": tensor '", name, "' has unsupported dtype '",
                                dtype, "'"));
        for (const auto& d : jt.value("shape", json::array()))
            t.shape.push_back(d.get<std::size_t>());
        const auto offset = jt.value("offset", std::size_t{0});
        const std::size_t bytes = t.size() * 4;
        if (offset + bytes > blob.size())
            throw DataError(cat(manifest_path, ": tensor '", name, "' overruns the blob (",
                                offset + bytes, " > ", blob.size(), " bytes)"));
        t.data.resize(t.size());
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= std::uint32_t(static_cast<unsigned char>(blob[offset + 4 * i + b]))
                        << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            t.data[i] = f;
        }
        if (store.find(name))
            throw DataError(cat(manifest_path, ": duplicate tensor '", name, "'"));
        store.put(name, std::move(t));
    }
    return store;
}

void WeightStore::save(const std::string& manifest_path) const
{
    namespace fs = std::filesystem;
    const fs::path manifest(manifest_path);
    fs::path blob_path = manifest;
    blob_path.replace_extension(".bin");

    std::string blob;
    json tensors = json::array();
    for (const auto& [name, t] : tensors_) {
        json jt;
        jt["name"] = name;
        jt["shape"] = t.shape;
        jt["dtype"] = "float32";
        jt["offset"] = blob.size();
        tensors.push_back(jt);
        for (float f : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b) blob.push_back(char((bits >> (8 * b)) & 0xff));
        }
    }
    json j;
    j["version"] = 1;
    j["blob"] = blob_path.filename().string();
    j["tensors"] = tensors;
    write_file_atomic(blob_path.string(), blob);
    write_file_atomic(manifest_path, j.dump(2) + "\n");
}

namespace {

struct ShapeCursor {
    bool flat = false;
    std::size_t F = 0, C = 1, D = 0;
};

void expected_for_layers(const std::string& scope, const std::vector<LayerSpec>& layers,
                         ShapeCursor& cur,
                         std::vector<std::pair<std::string, std::vector<std::size_t>>>& out)
{
    for (const auto& l : layers) {
        const std::string prefix = cat(scope, ".", l.name);
        switch (l.kind) {
        case LayerSpec::Kind::conv2d: {
            out.emplace_back(prefix + ".kernel",
                             std::vector<std::size_t>{static_cast<std::size_t>(l.channels), cur.C,
                                                      static_cast<std::size_t>(l.kernel_t),
                                                      static_cast<std::size_t>(l.kernel_f)});
            out.emplace_back(prefix + ".bias",
                             std::vector<std::size_t>{static_cast<std::size_t>(l.channels)});
            cur.C = static_cast<std::size_t>(l.channels);
            break;
        }
        case LayerSpec::Kind::maxpool:
            cur.F /= static_cast<std::size_t>(l.pool_f);
            if (cur.F == 0)
                throw DataError(cat(prefix, ": pooling exhausts the frequency axis"));
            break;
        case LayerSpec::Kind::dropout:
            break;
        case LayerSpec::Kind::dense: {
            const std::size_t in_dim = cur.flat ? cur.D : cur.F * cur.C;
            out.emplace_back(prefix + ".weight",
                             std::vector<std::size_t>{static_cast<std::size_t>(l.units), in_dim});
            out.emplace_back(prefix + ".bias",
                             std::vector<std::size_t>{static_cast<std::size_t>(l.units)});
            cur.flat = true;
            cur.D = static_cast<std::size_t>(l.units);
            break;
        }
        case LayerSpec::Kind::bilstm: {
            const std::size_t u = static_cast<std::size_t>(l.units);
            const std::size_t in_dim = cur.D;
            for (const char* dir : {"fw", "bw"}) {
                out.emplace_back(cat(prefix, ".", dir, ".kernel"),
                                 std::vector<std::size_t>{4 * u, in_dim});
                out.emplace_back(cat(prefix, ".", dir, ".recurrent"),
                                 std::vector<std::size_t>{4 * u, u});
                out.emplace_back(cat(prefix, ".", dir, ".bias"),
                                 std::vector<std::size_t>{4 * u});
            }
            cur.D = 2 * u;
            break;
        }
        }
    }
}

} // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(
    const ModelGraph& graph)
{
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    std::size_t fused = 0;
    for (const auto& b : graph.branches) {
        ShapeCursor cur;
        cur.F = static_cast<std::size_t>(b.input_bins);
        expected_for_layers(b.name, b.layers, cur, out);
        fused += cur.flat ? cur.D : cur.F * cur.C;
    }
    ShapeCursor head;
    head.flat = true;
    head.D = fused;
    expected_for_layers("head", graph.head, head, out);
    return out;
}

std::string ValidationReport::summary() const
{
    if (issues.empty()) return "ok";
    std::string s;
    for (const auto& line : issues) {
        s += line;
        s += '\n';
    }
    return s;
}

ValidationReport validate(const ModelGraph& graph, const WeightStore& weights)
{
    ValidationReport report;
    const auto expected = expected_tensors(graph);
    std::vector<std::string> wanted;
    for (const auto& [name, shape] : expected) {
        wanted.push_back(name);
        const Tensor* t = weights.find(name);
        if (!t) {
            report.issues.push_back(cat("missing tensor '", name, "'"));
            continue;
        }
        if (t->shape != shape) {
            auto fmt = [](const std::vector<std::size_t>& s) {
                std::string out = "[";
                for (std::size_t i = 0; i < s.size(); ++i)
                    out += (i ? "," : "") + std::to_string(s[i]);
                return out + "]";
            };
            report.issues.push_back(cat("tensor '", name, "' has shape ", fmt(t->shape),
                                        ", expected ", fmt(shape)));
        }
    }
    for (const auto& name : weights.names())
        if (std::find(wanted.begin(), wanted.end(), name) == wanted.end())
            report.issues.push_back(cat("unexpected tensor '", name, "'"));
    return report;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t, std::size_t rows, std::size_t cols)
{
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                t.data[r * cols + c];
    return m;
}

Eigen::VectorXd to_eigen_vec(const Tensor& t)
{
    Eigen::VectorXd v(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = t.data[i];
    return v;
}

FeatMap conv2d(const FeatMap& in, const LayerSpec& l, const Tensor& kernel, const Tensor& bias)
{
    FeatMap out;
    out.T = in.T;
    out.F = in.F;
    out.C = static_cast<std::size_t>(l.channels);
    out.v.assign(out.T * out.F * out.C, 0.0);

    const int ht = (l.kernel_t - 1) / 2, hf = (l.kernel_f - 1) / 2;
    const std::size_t in_c = in.C;
    const std::size_t kt = static_cast<std::size_t>(l.kernel_t);
    const std::size_t kf = static_cast<std::size_t>(l.kernel_f);

    for (std::size_t t = 0; t < out.T; ++t) {
        for (std::size_t f = 0; f < out.F; ++f) {
            for (std::size_t oc = 0; oc < out.C; ++oc) {
                double acc = bias.data[oc];
                for (std::size_t ic = 0; ic < in_c; ++ic) {
                    for (std::size_t i = 0; i < kt; ++i) {
                        const long long ti = static_cast<long long>(t) +
                                             l.dilation_t * (static_cast<long long>(i) - ht);
                        if (ti < 0 || ti >= static_cast<long long>(in.T)) continue;
                        for (std::size_t j = 0; j < kf; ++j) {
                            const long long fj = static_cast<long long>(f) +
                                                 l.dilation_f * (static_cast<long long>(j) - hf);
                            if (fj < 0 || fj >= static_cast<long long>(in.F)) continue;
                            const double w = kernel.data[((oc * in_c + ic) * kt + i) * kf + j];
                            acc += w * in.at(static_cast<std::size_t>(ti),
                                             static_cast<std::size_t>(fj), ic);
                        }
                    }
                }
                out.at(t, f, oc) = apply_act(l.activation, acc);
            }
        }
    }
    return out;
}

FeatMap maxpool_freq(const FeatMap& in, int pool_f)
{
    FeatMap out;
    out.T = in.T;
    out.F = in.F / static_cast<std::size_t>(pool_f);
    out.C = in.C;
    out.v.assign(out.T * out.F * out.C, 0.0);
    for (std::size_t t = 0; t < out.T; ++t)
        for (std::size_t f = 0; f < out.F; ++f)
            for (std::size_t c = 0; c < out.C; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < pool_f; ++j)
                    best = std::max(best, in.at(t, f * pool_f + j, c));
                out.at(t, f, c) = best;
            }
    return out;
}

Seq flatten(const FeatMap& in)
{
    Seq out;
    out.T = in.T;
    out.D = in.F * in.C;
    out.v = in.v; // same freq-major layout
    return out;
}

Seq dense(const Seq& in, const LayerSpec& l, const Tensor& weight, const Tensor& bias)
{
    const std::size_t units = static_cast<std::size_t>(l.units);
    const Eigen::MatrixXd W = to_eigen(weight, units, in.D);
    const Eigen::VectorXd b = to_eigen_vec(bias);

    Seq out;
    out.T = in.T;
    out.D = units;
    out.v.assign(out.T * out.D, 0.0);
    Eigen::VectorXd x(in.D), y;
    for (std::size_t t = 0; t < in.T; ++t) {
        for (std::size_t d = 0; d < in.D; ++d) x(static_cast<Eigen::Index>(d)) = in.at(t, d);
        y = W * x + b;
        if (l.activation == Activation::softmax) {
            const double m = y.maxCoeff();
            double z = 0.0;
            for (std::size_t d = 0; d < units; ++d)
                z += std::exp(y(static_cast<Eigen::Index>(d)) - m);
            for (std::size_t d = 0; d < units; ++d)
                out.at(t, d) = std::exp(y(static_cast<Eigen::Index>(d)) - m) / z;
        } else {
            for (std::size_t d = 0; d < units; ++d)
                out.at(t, d) = apply_act(l.activation, y(static_cast<Eigen::Index>(d)));
        }
    }
    return out;
}

// One direction of an LSTM over the whole sequence; gate order i, f, g, o.
void lstm_direction(const Seq& in, std::size_t units, const Eigen::MatrixXd& W,
                    const Eigen::MatrixXd& R, const Eigen::VectorXd& b, bool backward,
                    Seq& out, std::size_t out_offset)
{
    const auto u = static_cast<Eigen::Index>(units);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(u);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(u);
    Eigen::VectorXd x(in.D), gates;
    for (std::size_t step = 0; step < in.T; ++step) {
        const std::size_t t = backward ? in.T - 1 - step : step;
        for (std::size_t d = 0; d < in.D; ++d) x(static_cast<Eigen::Index>(d)) = in.at(t, d);
        gates = W * x + R * h + b;
        for (Eigen::Index k = 0; k < u; ++k) {
            const double i_g = 1.0 / (1.0 + std::exp(-gates(k)));
            const double f_g = 1.0 / (1.0 + std::exp(-gates(u + k)));
            const double g_g = std::tanh(gates(2 * u + k));
            const double o_g = 1.0 / (1.0 + std::exp(-gates(3 * u + k)));
            c(k) = f_g * c(k) + i_g * g_g;
            h(k) = o_g * std::tanh(c(k));
        }
        for (std::size_t d = 0; d < units; ++d)
            out.at(t, out_offset + d) = h(static_cast<Eigen::Index>(d));
    }
}

Seq bilstm(const Seq& in, const LayerSpec& l, const WeightStore& weights,
           const std::string& prefix)
{
    const std::size_t u = static_cast<std::size_t>(l.units);
    Seq out;
    out.T = in.T;
    out.D = 2 * u;
    out.v.assign(out.T * out.D, 0.0);
    for (int dir = 0; dir < 2; ++dir) {
        const std::string base = cat(prefix, dir == 0 ? ".fw" : ".bw");
        const Eigen::MatrixXd W = to_eigen(weights.get(base + ".kernel"), 4 * u, in.D);
        const Eigen::MatrixXd R = to_eigen(weights.get(base + ".recurrent"), 4 * u, u);
        const Eigen::VectorXd b = to_eigen_vec(weights.get(base + ".bias"));
        lstm_direction(in, u, W, R, b, dir == 1, out, dir == 0 ? 0 : u);
    }
    return out;
}

Seq run_layers(const std::string& scope, const std::vector<LayerSpec>& layers, FeatMap fm,
               Seq seq, bool flat, const WeightStore& weights)
{
    for (const auto& l : layers) {
        const std::string prefix = cat(scope, ".", l.name);
        switch (l.kind) {
        case LayerSpec::Kind::conv2d:
            fm = conv2d(fm, l, weights.get(prefix + ".kernel"), weights.get(prefix + ".bias"));
            break;
        case LayerSpec::Kind::maxpool:
            fm = maxpool_freq(fm, l.pool_f);
            break;
        case LayerSpec::Kind::dropout:
            break; // identity at inference
        case LayerSpec::Kind::dense:
            if (!flat) {
                seq = flatten(fm);
                fm = FeatMap{};
                flat = true;
            }
            seq = dense(seq, l, weights.get(prefix + ".weight"), weights.get(prefix + ".bias"));
            break;
        case LayerSpec::Kind::bilstm:
            seq = bilstm(seq, l, weights, prefix);
            break;
        }
    }
    if (!flat) seq = flatten(fm);
    return seq;
}

Seq run_branch(const BranchSpec& b, const Matrix& input, const WeightStore& weights)
{
    if (input.cols() != static_cast<std::size_t>(b.input_bins))
        throw DataError(cat("branch '", b.name, "' expects ", b.input_bins,
                            " input bins, got ", input.cols()));
    FeatMap fm;
    fm.T = input.rows();
    fm.F = input.cols();
    fm.C = 1;
    fm.v = input.values();
    return run_layers(b.name, b.layers, std::move(fm), Seq{}, false, weights);
}

Seq run_graph(const ModelGraph& graph, const WeightStore& weights,
              const std::vector<std::pair<const BranchSpec*, const Matrix*>>& inputs)
{
    const ValidationReport report = validate(graph, weights);
    if (!report.ok())
        throw DataError(cat("weights do not match graph '", graph.name, "':\n",
                            report.summary()));

    std::vector<Seq> outs;
    for (const auto& [branch, input] : inputs) outs.push_back(run_branch(*branch, *input, weights));

    Seq fused;
    fused.T = outs.front().T;
    fused.D = 0;
    for (const auto& s : outs) {
        if (s.T != fused.T) throw DataError("branch outputs disagree on frame count");
        fused.D += s.D;
    }
    fused.v.assign(fused.T * fused.D, 0.0);
    for (std::size_t t = 0; t < fused.T; ++t) {
        std::size_t off = 0;
        for (const auto& s : outs) {
            for (std::size_t d = 0; d < s.D; ++d) fused.at(t, off + d) = s.at(t, d);
            off += s.D;
        }
    }
    return run_layers("head", graph.head, FeatMap{}, std::move(fused), true, weights);
}

} // namespace

FramedMatrix forward_note_model(const MelSpectrogram& mel, const Posteriorgram& ppg,
                                const ModelGraph& graph, const WeightStore& weights)
{
    if (mel.frames.rows() != ppg.frames.rows())
        throw DataError(cat("mel has ", mel.frames.rows(), " frames but PPG has ",
                            ppg.frames.rows()));
    if (!mel.grid.same_grid(ppg.grid))
        throw DataError("mel and PPG are on different frame grids");

    const LayerSpec& last = graph.head.back();
    if (last.kind != LayerSpec::Kind::dense || last.units != 3 ||
        last.activation != Activation::sigmoid)
        throw DataError("note model head must end in dense(3, sigmoid)");

    std::vector<std::pair<const BranchSpec*, const Matrix*>> inputs;
    for (const auto& b : graph.branches)
        inputs.emplace_back(&b, b.input == "mel" ? &mel.frames : &ppg.frames);

    const Seq out = run_graph(graph, weights, inputs);
    FramedMatrix fm;
    fm.grid = mel.grid;
    fm.m = Matrix(out.T, 3);
    for (std::size_t t = 0; t < out.T; ++t)
        for (std::size_t d = 0; d < 3; ++d) fm.m(t, d) = out.at(t, d);
    return fm;
}

Posteriorgram forward_phoneme_model(const MelSpectrogram& mel, const ModelGraph& graph,
                                    const WeightStore& weights, const PhonemeInventory& inventory)
{
    const LayerSpec& last = graph.head.back();
    if (last.kind != LayerSpec::Kind::dense || last.activation != Activation::softmax)
        throw DataError("phoneme model head must end in a softmax dense layer");
    if (static_cast<std::size_t>(last.units) != inventory.num_classes())
        throw DataError(cat("phoneme model emits ", last.units, " classes, inventory needs ",
                            inventory.num_classes()));

    std::vector<std::pair<const BranchSpec*, const Matrix*>> inputs;
    for (const auto& b : graph.branches) {
        if (b.input != "mel")
            throw DataError("phoneme model branches must consume the mel input");
        inputs.emplace_back(&b, &mel.frames);
    }

    const Seq out = run_graph(graph, weights, inputs);
    Posteriorgram ppg;
    ppg.grid = mel.grid;
    ppg.inventory = inventory;
    ppg.frames = Matrix(out.T, out.D);
    for (std::size_t t = 0; t < out.T; ++t)
        for (std::size_t d = 0; d < out.D; ++d) ppg.frames(t, d) = out.at(t, d);
    return ppg;
}

} // namespace notegate
