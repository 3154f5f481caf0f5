#pragma once

#include "dispel/dataset.hpp"
#include "dispel/nn.hpp"
#include "dispel/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dispel {

struct NoMask {};
/// One mask vector (length d) shared by every sample.
struct GlobalMask {
    std::vector<double> mask;
};
/// Per-sample masks from a trained generator.
struct EmgMask {
    EmgModel emg;
};
/// Caller-supplied per-sample masks, n x d.
struct ExplicitMask {
    Tensor masks;
};
using MaskSource = std::variant<NoMask, GlobalMask, EmgMask, ExplicitMask>;

std::string mask_source_name(const MaskSource& source);

/// Masks for every row of x under `source` (all ones for NoMask).
Tensor resolve_masks(const SplitModel& model, const MaskSource& source, const Tensor& x);
/// g(x), or m * g(x) when a mask source is given.
Tensor masked_embeddings(const SplitModel& model, const MaskSource& source, const Tensor& x);
Tensor masked_logits(const SplitModel& model, const MaskSource& source, const Tensor& x);

/// Fraction of rows whose argmax (lowest index on ties) matches the label.
double accuracy_from_logits(std::span<const int> labels, const Tensor& logits);
double accuracy(const SplitModel& model, const MaskSource& source, const DomainDataset& data);
double accuracy(const SplitModel& model, const MaskSource& source, const Pool& data);

enum class DistanceKind { L2, L1 };
std::string to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(const std::string& text);

/// Per-sample decomposition of the masked-vs-unmasked output distance into a
/// shared-feature and a specific-feature term. Means are sample means over
/// the provided rows.
struct BoundReport {
    DistanceKind distance = DistanceKind::L2;
    double ge = 0.0;
    double term_sh = 0.0;
    double term_sp = 0.0;
    std::size_t violation_count = 0;
    std::size_t samples = 0;
    double max_slack_used = 0.0;  ///< max over samples of ge_k - (sh_k + sp_k)

    nlohmann::json to_json() const;
};

inline constexpr double kBoundSlack = 1e-9;

/// `predictor` must be a single affine layer. z and masks are n x d; the dim
/// lists must partition [0, d). GE uses the full affine map; the two terms
/// use its linear part on the zero-padded shared/specific parts of z.
BoundReport bound_terms(const Mlp& predictor, const Tensor& z, const Tensor& masks,
                        std::span<const std::size_t> shared_dims, std::span<const std::size_t> specific_dims,
                        DistanceKind distance);
/// Convenience overload taking the dims from an oracle (rejects mixed oracles
/// and models without an identity encoder).
BoundReport bound_terms(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                        const FeatureOracle& oracle, DistanceKind distance);

/// CSV: sample_id,label,domain,e0..e{d-1}
void export_embeddings(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                       const std::filesystem::path& path);
/// CSV: sample_id,m0..m{d-1}
void export_masks(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                  const std::filesystem::path& path);

using AccuracyMap = std::map<std::string, double>;

struct Stat {
    double mean = 0.0;
    double std_error = 0.0;
};

struct RunReport {
    std::map<std::string, Stat> accuracy;
    std::vector<std::uint64_t> seeds;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> artifacts;

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

/// Per-domain mean and standard error (sample stddev / sqrt(runs)).
RunReport aggregate_runs(std::span<const AccuracyMap> reports, std::span<const std::uint64_t> seeds);

}  // namespace dispel
