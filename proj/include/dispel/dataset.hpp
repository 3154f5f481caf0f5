#pragma once

#include "dispel/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dispel {

/// Ground truth about which feature columns carry domain-shared versus
/// domain-specific signal. Only known for generated data.
struct FeatureOracle {
    std::vector<std::size_t> shared_dims;
    std::vector<std::size_t> specific_dims;
    /// True when a global rotation mixed the blocks; the dim lists then no
    /// longer describe individual columns.
    bool mixed = false;
    /// Per training domain map applied to class means in the specific block.
    std::vector<Tensor> domain_maps;
    Tensor unseen_map;

    bool operator==(const FeatureOracle&) const = default;
};

/// Labeled samples from one domain. `domain_index` is bookkeeping only and
/// is never used as a model input.
struct DomainDataset {
    Tensor features = Tensor::zeros({0, 0});
    std::vector<int> labels;
    int domain_index = 0;
    std::optional<FeatureOracle> oracle;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t num_features() const { return features.cols(); }
    /// Checks row/label agreement and non-negative labels.
    void validate() const;
};

/// Row-concatenated view of several domains.
struct Pool {
    Tensor x = Tensor::zeros({0, 0});
    std::vector<int> y;
    std::size_t size() const noexcept { return y.size(); }
};

Pool pool_domains(std::span<const DomainDataset> domains);

/// Per-domain split of sample indices into training and validation parts.
/// Each domain contributes floor(val_fraction * n) validation rows (at least
/// one when it has two or more samples), chosen by a seeded shuffle.
struct TrainValSplit {
    Pool train;
    Pool val;
};
TrainValSplit split_train_val(std::span<const DomainDataset> domains, double val_fraction, std::uint64_t seed);

/// Number of classes implied by the labels (max label + 1).
std::size_t infer_num_classes(std::span<const DomainDataset> domains);

}  // namespace dispel
