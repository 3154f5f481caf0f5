#include "dispel/dataset.hpp"

#include "dispel/error.hpp"
#include "dispel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dispel {

void DomainDataset::validate() const {
    if (features.rank() != 2) throw DimensionError("dataset features must be a matrix");
    if (features.rows() != labels.size())
        throw DimensionError("dataset has " + std::to_string(features.rows()) + " rows but " +
                             std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0) throw UsageError("negative label at row " + std::to_string(i));
}

Pool pool_domains(std::span<const DomainDataset> domains) {
    Pool pool;
    if (domains.empty()) return pool;
    std::vector<Tensor> parts;
    for (const auto& d : domains) {
        d.validate();
        parts.push_back(d.features);
        pool.y.insert(pool.y.end(), d.labels.begin(), d.labels.end());
    }
    pool.x = vstack(parts);
    return pool;
}

TrainValSplit split_train_val(std::span<const DomainDataset> domains, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (domains.empty()) throw UsageError("no training domains");
    std::vector<Tensor> tr_parts, va_parts;
    TrainValSplit out;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        const auto& dom = domains[d];
        dom.validate();
        const std::size_t n = dom.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = derive_rng(seed, {0x76616cULL, d});
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
        if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
        else n_val = 0;
        std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::vector<std::size_t> tr_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(tr_idx.begin(), tr_idx.end());
        tr_parts.push_back(dom.features.gather_rows(tr_idx));
        va_parts.push_back(dom.features.gather_rows(val_idx));
        for (auto i : tr_idx) out.train.y.push_back(dom.labels[i]);
        for (auto i : val_idx) out.val.y.push_back(dom.labels[i]);
    }
    out.train.x = vstack(tr_parts);
    out.val.x = vstack(va_parts);
    return out;
}

std::size_t infer_num_classes(std::span<const DomainDataset> domains) {
    int mx = -1;
    for (const auto& d : domains)
        for (int y : d.labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
}

}  // namespace dispel
