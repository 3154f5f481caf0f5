#pragma once

#include "dispel/tape.hpp"
#include "dispel/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dispel {

struct ParamEntry {
    Tensor value;
    bool trainable = true;
    bool operator==(const ParamEntry&) const = default;
};

/// Named parameters with per-parameter trainable flags, iterated in name order.
class ParamStore {
public:
    void add(const std::string& name, Tensor value, bool trainable = true);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const ParamEntry& at(const std::string& name) const;
    Tensor& mutable_value(const std::string& name);

    void freeze(const std::string& name);
    void freeze_all();
    bool any_trainable() const;

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t parameter_count() const;
    const std::map<std::string, ParamEntry>& entries() const noexcept { return entries_; }

    /// SHA-256 over names, shapes and value bytes (trainable flags excluded).
    std::string checksum() const;

    /// Copies every entry of `other` into this store; names must not collide.
    void merge(const ParamStore& other);

    bool operator==(const ParamStore&) const = default;

private:
    std::map<std::string, ParamEntry> entries_;
};

enum class Activation { Identity, Relu, Sigmoid };

/// Fully connected network: affine layers with relu between them and a
/// configurable activation after the last one. Layer `i` owns parameters
/// `layer{i}.weight` [in x out] and `layer{i}.bias` [1 x out]; `first_layer`
/// offsets the numbering so a split keeps the original names.
class Mlp {
public:
    Mlp(std::vector<std::size_t> layer_sizes, Activation output_activation, ParamStore params,
        std::size_t first_layer = 0);

    /// Glorot-uniform weights, zero biases, seeded per layer.
    static Mlp init(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                    Activation output_activation = Activation::Identity);

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t num_layers() const noexcept { return sizes_.size() - 1; }
    std::size_t input_dim() const noexcept { return sizes_.front(); }
    std::size_t output_dim() const noexcept { return sizes_.back(); }
    std::size_t first_layer() const noexcept { return first_layer_; }
    Activation output_activation() const noexcept { return output_activation_; }

    const ParamStore& params() const noexcept { return params_; }
    ParamStore& params() noexcept { return params_; }

    static std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
    static std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

    /// Records the forward pass; trainable parameters become tape parameters.
    Var forward(Tape& tape, Var x) const;
    /// Inference-only forward (same kernels as the recorded path).
    Tensor forward(const Tensor& x) const;

private:
    std::vector<std::size_t> sizes_;
    Activation output_activation_;
    ParamStore params_;
    std::size_t first_layer_;
};

/// Frozen model split into an encoder (input -> embedding) and a predictor
/// (embedding -> logits). An absent encoder is the identity map.
class SplitModel {
public:
    SplitModel(std::optional<Mlp> encoder, Mlp predictor);

    const std::optional<Mlp>& encoder() const noexcept { return encoder_; }
    const Mlp& predictor() const noexcept { return predictor_; }
    std::optional<Mlp>& encoder() noexcept { return encoder_; }
    Mlp& predictor() noexcept { return predictor_; }

    std::size_t input_dim() const;
    std::size_t embedding_dim() const noexcept { return predictor_.input_dim(); }
    std::size_t num_classes() const noexcept { return predictor_.output_dim(); }
    bool identity_encoder() const noexcept { return !encoder_.has_value(); }
    /// Single affine layer with identity output.
    bool predictor_is_affine() const noexcept;

    Tensor embed(const Tensor& x) const;
    Var embed(Tape& tape, Var x) const;
    Tensor predict_logits(const Tensor& z) const { return predictor_.forward(z); }
    Var predict_logits(Tape& tape, Var z) const { return predictor_.forward(tape, z); }

    void freeze();
    bool any_trainable() const;
    /// Combined checksum of encoder and predictor parameters.
    std::string checksum() const;
    /// All parameters of both parts in one store (for saving).
    ParamStore merged_params() const;

private:
    std::optional<Mlp> encoder_;
    Mlp predictor_;
};

/// Splits `model` so that layers [0, split_index) form the encoder and the
/// rest the predictor. Requires 1 <= split_index < num_layers.
SplitModel split_model(const Mlp& model, std::size_t split_index);
/// Identity encoder, whole model as predictor.
SplitModel identity_split(const Mlp& model);

/// Writes `<base>.manifest` (text) and `<base>.payload` (little-endian f64).
void save_params(const ParamStore& store, const std::filesystem::path& base);
/// Reads a store written by save_params; throws CorruptFileError on any
/// manifest/payload inconsistency without returning partial data.
ParamStore load_params(const std::filesystem::path& base);

std::filesystem::path manifest_path(const std::filesystem::path& base);
std::filesystem::path payload_path(const std::filesystem::path& base);

}  // namespace dispel
