#pragma once

#include "dispel/dataset.hpp"
#include "dispel/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dispel {

/// Per-embedding-dimension accuracy drop when that column of g(x) is
/// permuted across the pooled training rows.
struct ImportanceReport {
    std::vector<double> scores;
    std::size_t repeats = 0;
    double baseline_accuracy = 0.0;
};

/// Each dimension k uses its own stream derived from (seed, k), so the result
/// does not depend on `jobs`.
ImportanceReport permutation_importance(const SplitModel& model, std::span<const DomainDataset> data,
                                        std::size_t repeats, std::uint64_t seed, std::size_t jobs = 1);

/// Zeroes floor(percent/100 * d) dimensions with the lowest scores; ties go to
/// the lower index first.
std::vector<double> global_mask_from_scores(std::span<const double> scores, double percent);

struct SweepRow {
    double percent = 0.0;
    double unseen_accuracy = 0.0;
    double train_accuracy = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    double best_percent = 0.0;
    ImportanceReport importance;

    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

std::vector<double> default_percent_grid();

/// Ranks dimensions on `train` and reports accuracy under each bottom-p%
/// global mask. The grid must contain 0 and be strictly increasing.
SweepTable sweep_mask_percent(const SplitModel& model, std::span<const DomainDataset> train,
                              const DomainDataset& unseen, std::span<const double> percent_grid,
                              std::size_t repeats, std::uint64_t seed, std::size_t jobs = 1);

}  // namespace dispel
