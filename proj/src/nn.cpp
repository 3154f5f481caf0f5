#include "dispel/nn.hpp"

#include "dispel/checksum.hpp"
#include "dispel/error.hpp"
#include "dispel/rng.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dispel {

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    if (name.empty() || name.find_first_of(" \t\r\n=") != std::string::npos)
        throw UsageError("invalid parameter name '" + name + "'");
    if (!entries_.emplace(name, ParamEntry{std::move(value), trainable}).second)
        throw UsageError("duplicate parameter name '" + name + "'");
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::mutable_value(const std::string& name) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second.value;
}

void ParamStore::freeze(const std::string& name) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    it->second.trainable = false;
}

void ParamStore::freeze_all() {
    for (auto& [_, e] : entries_) e.trainable = false;
}

bool ParamStore::any_trainable() const {
    for (const auto& [_, e] : entries_)
        if (e.trainable) return true;
    return false;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.numel();
    return n;
}

std::string ParamStore::checksum() const {
    Sha256 h;
    for (const auto& [name, e] : entries_) {
        h.update(name);
        h.update(shape_to_string(e.value.shape()));
        h.update(e.value.data());
    }
    return h.hex_digest();
}

void ParamStore::merge(const ParamStore& other) {
    for (const auto& [name, e] : other.entries_) add(name, e.value, e.trainable);
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<std::size_t> layer_sizes, Activation output_activation, ParamStore params,
         std::size_t first_layer)
    : sizes_(std::move(layer_sizes)), output_activation_(output_activation), params_(std::move(params)),
      first_layer_(first_layer) {
    if (sizes_.size() < 2) throw UsageError("an MLP needs at least an input and an output size");
    for (std::size_t s : sizes_)
        if (s == 0) throw UsageError("MLP layer sizes must be >= 1");
    for (std::size_t l = 0; l < num_layers(); ++l) {
        const std::size_t idx = first_layer_ + l;
        const Shape wshape{sizes_[l], sizes_[l + 1]};
        const Shape bshape{1, sizes_[l + 1]};
        if (params_.at(weight_name(idx)).value.shape() != wshape ||
            params_.at(bias_name(idx)).value.shape() != bshape)
            throw DimensionError("parameter shapes of layer " + std::to_string(idx) +
                                 " do not match layer sizes");
    }
    if (params_.size() != 2 * num_layers()) throw UsageError("MLP parameter store has extra entries");
}

Mlp Mlp::init(std::vector<std::size_t> layer_sizes, std::uint64_t seed, Activation output_activation) {
    if (layer_sizes.size() < 2) throw UsageError("an MLP needs at least an input and an output size");
    ParamStore store;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Rng rng = derive_rng(seed, {0x6c61796572ULL, l});
        Tensor w = Tensor::zeros({fan_in, fan_out});
        for (double& v : w.data()) v = (2.0 * uniform01(rng) - 1.0) * a;
        store.add(weight_name(l), std::move(w));
        store.add(bias_name(l), Tensor::zeros({1, fan_out}));
    }
    return Mlp(std::move(layer_sizes), output_activation, std::move(store));
}

Var Mlp::forward(Tape& tape, Var x) const {
    if (x.value().rank() != 2 || x.value().cols() != input_dim())
        throw DimensionError("MLP expects input width " + std::to_string(input_dim()) + ", got shape " +
                             shape_to_string(x.value().shape()));
    Var h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        const auto& w = params_.at(weight_name(first_layer_ + l));
        const auto& b = params_.at(bias_name(first_layer_ + l));
        Var wv = tape.parameter(weight_name(first_layer_ + l), w.value, w.trainable);
        Var bv = tape.parameter(bias_name(first_layer_ + l), b.value, b.trainable);
        h = tape.add_row(tape.matmul(h, wv), bv);
        const bool last = l + 1 == num_layers();
        if (!last) {
            h = tape.relu(h);
        } else if (output_activation_ == Activation::Relu) {
            h = tape.relu(h);
        } else if (output_activation_ == Activation::Sigmoid) {
            h = tape.sigmoid(h);
        }
    }
    return h;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tape tape;
    return forward(tape, tape.constant(x)).value();
}

// ---------------------------------------------------------------------------
// SplitModel

SplitModel::SplitModel(std::optional<Mlp> encoder, Mlp predictor)
    : encoder_(std::move(encoder)), predictor_(std::move(predictor)) {
    if (encoder_ && encoder_->output_dim() != predictor_.input_dim())
        throw DimensionError("encoder width " + std::to_string(encoder_->output_dim()) +
                             " does not match predictor input " + std::to_string(predictor_.input_dim()));
}

std::size_t SplitModel::input_dim() const { return encoder_ ? encoder_->input_dim() : predictor_.input_dim(); }

bool SplitModel::predictor_is_affine() const noexcept {
    return predictor_.num_layers() == 1 && predictor_.output_activation() == Activation::Identity;
}

Tensor SplitModel::embed(const Tensor& x) const {
    if (!encoder_) {
        if (x.rank() != 2 || x.cols() != predictor_.input_dim())
            throw DimensionError("identity encoder expects width " + std::to_string(predictor_.input_dim()) +
                                 ", got shape " + shape_to_string(x.shape()));
        return x;
    }
    return encoder_->forward(x);
}

Var SplitModel::embed(Tape& tape, Var x) const { return encoder_ ? encoder_->forward(tape, x) : x; }

void SplitModel::freeze() {
    if (encoder_) encoder_->params().freeze_all();
    predictor_.params().freeze_all();
}

bool SplitModel::any_trainable() const {
    return (encoder_ && encoder_->params().any_trainable()) || predictor_.params().any_trainable();
}

std::string SplitModel::checksum() const {
    Sha256 h;
    h.update(encoder_ ? encoder_->params().checksum() : std::string("identity"));
    h.update(predictor_.params().checksum());
    return h.hex_digest();
}

ParamStore SplitModel::merged_params() const {
    ParamStore out;
    if (encoder_) out.merge(encoder_->params());
    out.merge(predictor_.params());
    return out;
}

SplitModel split_model(const Mlp& model, std::size_t split_index) {
    if (split_index < 1 || split_index >= model.num_layers())
        throw UsageError("split index " + std::to_string(split_index) + " outside [1, " +
                         std::to_string(model.num_layers()) + ")");
    const auto& sizes = model.layer_sizes();
    ParamStore enc, pred;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const std::size_t idx = model.first_layer() + l;
        ParamStore& dst = l < split_index ? enc : pred;
        const auto& w = model.params().at(Mlp::weight_name(idx));
        const auto& b = model.params().at(Mlp::bias_name(idx));
        dst.add(Mlp::weight_name(idx), w.value, w.trainable);
        dst.add(Mlp::bias_name(idx), b.value, b.trainable);
    }
    std::vector<std::size_t> enc_sizes(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(split_index) + 1);
    std::vector<std::size_t> pred_sizes(sizes.begin() + static_cast<std::ptrdiff_t>(split_index), sizes.end());
    // The embedding is the post-activation output of the last encoder layer.
    Mlp encoder(std::move(enc_sizes), Activation::Relu, std::move(enc), model.first_layer());
    Mlp predictor(std::move(pred_sizes), model.output_activation(), std::move(pred),
                  model.first_layer() + split_index);
    return SplitModel(std::move(encoder), std::move(predictor));
}

SplitModel identity_split(const Mlp& model) { return SplitModel(std::nullopt, model); }

// ---------------------------------------------------------------------------
// Parameter files

std::filesystem::path manifest_path(const std::filesystem::path& base) {
    return std::filesystem::path(base.string() + ".manifest");
}

std::filesystem::path payload_path(const std::filesystem::path& base) {
    return std::filesystem::path(base.string() + ".payload");
}

namespace {

constexpr const char* kManifestFormat = "dispel-params-v1";

std::string shape_field(const Shape& shape) {
    if (shape.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(shape[i]);
    }
    return out;
}

std::size_t parse_size(std::string_view text, const std::string& what) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw CorruptFileError("bad " + what + " '" + std::string(text) + "' in parameter manifest");
    return v;
}

Shape parse_shape(const std::string& text) {
    if (text == "scalar") return {};
    Shape shape;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find('x', start);
        shape.push_back(parse_size(std::string_view(text).substr(start, pos - start), "shape"));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return shape;
}

std::map<std::string, std::string> parse_fields(const std::string& line, std::size_t line_no) {
    std::map<std::string, std::string> fields;
    std::istringstream is(line);
    std::string token;
    while (is >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw CorruptFileError("manifest line " + std::to_string(line_no) + ": expected key=value");
        fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return fields;
}

const std::string& field(const std::map<std::string, std::string>& fields, const std::string& key,
                         std::size_t line_no) {
    const auto it = fields.find(key);
    if (it == fields.end())
        throw CorruptFileError("manifest line " + std::to_string(line_no) + ": missing '" + key + "'");
    return it->second;
}

}  // namespace

void save_params(const ParamStore& store, const std::filesystem::path& base) {
    std::ostringstream manifest;
    std::size_t offset = 0;
    std::ostringstream lines;
    for (const auto& [name, e] : store.entries()) {
        lines << "param name=" << name << " shape=" << shape_field(e.value.shape()) << " offset=" << offset
              << " trainable=" << (e.trainable ? 1 : 0) << '\n';
        offset += e.value.numel() * sizeof(double);
    }
    manifest << "format=" << kManifestFormat << '\n'
             << "entries=" << store.size() << '\n'
             << "payload_bytes=" << offset << '\n'
             << lines.str();

    std::ofstream payload(payload_path(base), std::ios::binary | std::ios::trunc);
    if (!payload) throw IoError("cannot write " + payload_path(base).string());
    for (const auto& [_, e] : store.entries()) {
        for (double v : e.value.data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            char buf[8];
            for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
            payload.write(buf, 8);
        }
    }
    if (!payload) throw IoError("failed writing " + payload_path(base).string());

    std::ofstream mf(manifest_path(base), std::ios::binary | std::ios::trunc);
    if (!mf) throw IoError("cannot write " + manifest_path(base).string());
    mf << manifest.str();
    if (!mf) throw IoError("failed writing " + manifest_path(base).string());
}

ParamStore load_params(const std::filesystem::path& base) {
    std::ifstream mf(manifest_path(base), std::ios::binary);
    if (!mf) throw MissingArtifactError("cannot open " + manifest_path(base).string());
    std::ifstream payload(payload_path(base), std::ios::binary);
    if (!payload) throw MissingArtifactError("cannot open " + payload_path(base).string());
    const std::string bytes((std::istreambuf_iterator<char>(payload)), std::istreambuf_iterator<char>());

    std::string line;
    std::size_t line_no = 0;
    auto next_header = [&](const std::string& key) -> std::string {
        if (!std::getline(mf, line)) throw CorruptFileError("manifest truncated before '" + key + "'");
        ++line_no;
        const auto fields = parse_fields(line, line_no);
        return field(fields, key, line_no);
    };
    if (next_header("format") != kManifestFormat) throw CorruptFileError("unknown manifest format");
    const std::size_t entries = parse_size(next_header("entries"), "entries");
    const std::size_t payload_bytes = parse_size(next_header("payload_bytes"), "payload_bytes");
    if (bytes.size() != payload_bytes)
        throw CorruptFileError("payload holds " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                               std::to_string(payload_bytes));

    ParamStore store;
    std::size_t expected_offset = 0;
    std::size_t seen = 0;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("param ", 0) != 0)
            throw CorruptFileError("manifest line " + std::to_string(line_no) + ": expected 'param'");
        const auto fields = parse_fields(line.substr(6), line_no);
        const std::string& name = field(fields, "name", line_no);
        const Shape shape = parse_shape(field(fields, "shape", line_no));
        const std::size_t offset = parse_size(field(fields, "offset", line_no), "offset");
        const std::string& trainable = field(fields, "trainable", line_no);
        if (trainable != "0" && trainable != "1")
            throw CorruptFileError("manifest line " + std::to_string(line_no) + ": bad trainable flag");
        if (offset != expected_offset)
            throw CorruptFileError("manifest line " + std::to_string(line_no) + ": offset " +
                                   std::to_string(offset) + " expected " + std::to_string(expected_offset));
        const std::size_t n = shape_numel(shape);
        if (offset + n * sizeof(double) > bytes.size())
            throw CorruptFileError("payload too short for parameter '" + name + "'");
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i * 8 + b])) << (8 * b);
            values[i] = std::bit_cast<double>(bits);
        }
        try {
            store.add(name, Tensor(shape, std::move(values)), trainable == "1");
        } catch (const UsageError& e) {
            throw CorruptFileError(std::string("manifest: ") + e.what());
        }
        expected_offset += n * sizeof(double);
        ++seen;
    }
    if (seen != entries)
        throw CorruptFileError("manifest declares " + std::to_string(entries) + " entries, found " +
                               std::to_string(seen));
    if (expected_offset != payload_bytes) throw CorruptFileError("manifest entries do not cover the payload");
    return store;
}

}  // namespace dispel
