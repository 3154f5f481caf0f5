#pragma once

#include "dispel/dataset.hpp"
#include "dispel/mask.hpp"
#include "dispel/nn.hpp"
#include "dispel/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dispel {

struct TrainConfig {
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 200;
    /// Epochs without a validation improvement before stopping.
    std::size_t patience = 10;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    AdamConfig adam;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

/// Epoch 0 is the untrained starting point; `selected_epoch` has the lowest
/// validation loss among the recorded epochs.
struct TrainTrace {
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;

    /// `epoch,train_loss,val_loss` rows; wall-clock is not serialized.
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

/// Hidden widths of the base classifier and where to split it. With no
/// hidden layers the model is linear and the encoder is the identity.
struct ModelSpec {
    std::vector<std::size_t> hidden{32};
    /// Defaults to num_layers - 1 (predictor = final linear layer).
    std::optional<std::size_t> split_index;

    std::vector<std::size_t> layer_sizes(std::size_t input_dim, std::size_t num_classes) const;
};

struct ErmResult {
    Mlp model;
    TrainTrace trace;
};

/// Pooled hard-label cross-entropy training with validation-based selection.
ErmResult train_erm(const ModelSpec& spec, const TrainConfig& cfg, std::span<const DomainDataset> domains);

/// Applies `spec.split_index` (or its default) and freezes the result.
SplitModel make_frozen_split(const Mlp& model, const ModelSpec& spec);

struct EmgOptions {
    std::vector<std::size_t> hidden{32};
    /// Train against argmax(c(z)) instead of softmax(c(z)).
    bool hard_target = false;
};

/// Trained mask generator plus the settings its masks are drawn with.
struct EmgModel {
    Mlp generator;
    MaskGenConfig mask;

    Tensor probabilities(const Tensor& x) const { return generator.forward(x); }
    Tensor inference_masks(const Tensor& x) const { return inference_mask(probabilities(x), mask); }
};

struct EmgResult {
    EmgModel emg;
    TrainTrace trace;
};

/// Fresh generator: sigmoid-headed MLP from input width to embedding width.
Mlp init_generator(std::size_t input_dim, std::size_t embedding_dim, const EmgOptions& opts, std::uint64_t seed);

/// Trains the generator so that c(m * g(x)) matches c(g(x)) on the training
/// domains. `frozen` must have no trainable parameter; its checksum is
/// verified before and after. Labels and domain indices are not consumed.
EmgResult train_emg(const SplitModel& frozen, Mlp generator, std::span<const DomainDataset> domains,
                    const MaskGenConfig& mask_cfg, const TrainConfig& cfg, bool hard_target = false);

}  // namespace dispel
