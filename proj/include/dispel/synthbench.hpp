#pragma once

#include "dispel/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dispel {

/// Multi-domain classification problem with a shared block (class means plus
/// Gaussian noise, identical in every domain) and a specific block (class
/// means pushed through a per-domain orthogonal map). The unseen domain gets
/// its own map, so the specific block points at the wrong classes there.
struct BenchmarkSpec {
    std::size_t num_classes = 5;
    std::size_t shared_dims = 8;
    std::size_t specific_dims = 8;
    std::size_t num_train_domains = 3;
    std::size_t samples_per_domain = 1000;
    std::size_t unseen_samples = 1000;
    double spurious_strength = 0.9;
    double noise_sigma = 0.5;
    /// Apply one random rotation to the concatenated features.
    bool mixing = false;

    std::size_t num_features() const noexcept { return shared_dims + specific_dims; }
    void validate() const;
};

struct Benchmark {
    std::vector<DomainDataset> train;
    DomainDataset unseen;
    FeatureOracle oracle;
    /// Unit-norm class means in the shared block, one row per class.
    Tensor class_means;
};

/// Deterministic in (spec, seed). Throws ConfigError when well-separated
/// class means cannot be found within 10^4 rejection tries.
Benchmark generate_benchmark(const BenchmarkSpec& spec, std::uint64_t seed);

/// Columns to read from a CSV file. Feature and label columns are required;
/// the domain column, when named, must exist and hold one value per file.
struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::string label_column = "label";
    std::optional<std::string> domain_column;

    /// f0..f{D-1}, label[, domain]
    static CsvSchema standard(std::size_t num_features, bool with_domain);
};

/// Writes `f0..f{D-1},label[,domain]` with 17 significant digits.
void write_csv_dataset(const DomainDataset& data, const std::filesystem::path& path, bool with_domain = true);
DomainDataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema);
/// Reads the standard layout, taking the feature count from the header.
DomainDataset load_csv_dataset(const std::filesystem::path& path);

void write_oracle(const FeatureOracle& oracle, const std::filesystem::path& path);
FeatureOracle read_oracle(const std::filesystem::path& path);

}  // namespace dispel
