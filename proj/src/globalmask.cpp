#include "dispel/globalmask.hpp"

#include "dispel/error.hpp"
#include "dispel/eval.hpp"
#include "dispel/mask.hpp"
#include "dispel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace dispel {

ImportanceReport permutation_importance(const SplitModel& model, std::span<const DomainDataset> data,
                                        std::size_t repeats, std::uint64_t seed, std::size_t jobs) {
    if (repeats < 1) throw UsageError("permutation importance needs repeats >= 1");
    const Pool pool = pool_domains(data);
    if (pool.size() == 0) throw UsageError("permutation importance over empty data");
    const Tensor z = model.embed(pool.x);
    const std::size_t n = z.rows(), d = z.cols();

    ImportanceReport report;
    report.repeats = repeats;
    report.baseline_accuracy = accuracy_from_logits(pool.y, model.predict_logits(z));
    report.scores.assign(d, 0.0);

    auto score_dim = [&](std::size_t k) {
        Rng rng = derive_rng(seed, {0x7065726dULL, k});
        Tensor permuted = z;
        std::vector<double> column(n);
        double acc_sum = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            for (std::size_t i = 0; i < n; ++i) column[i] = z(i, k);
            std::shuffle(column.begin(), column.end(), rng);
            for (std::size_t i = 0; i < n; ++i) permuted(i, k) = column[i];
            acc_sum += accuracy_from_logits(pool.y, model.predict_logits(permuted));
        }
        report.scores[k] = report.baseline_accuracy - acc_sum / static_cast<double>(repeats);
    };

    jobs = std::max<std::size_t>(1, std::min(jobs, d));
    if (jobs == 1) {
        for (std::size_t k = 0; k < d; ++k) score_dim(k);
    } else {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&, w] {
                for (std::size_t k = w; k < d; k += jobs) score_dim(k);
            });
    }
    return report;
}

std::vector<double> global_mask_from_scores(std::span<const double> scores, double percent) {
    if (!(percent >= 0.0 && percent <= 100.0)) throw UsageError("mask percent must lie in [0, 100]");
    const std::size_t d = scores.size();
    // Integer-exact floor for grid values like 10 with d = 10.
    const auto count = static_cast<std::size_t>(std::floor(percent * static_cast<double>(d) / 100.0 + 1e-9));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> mask(d, 1.0);
    for (std::size_t i = 0; i < std::min(count, d); ++i) mask[order[i]] = 0.0;
    return mask;
}

std::string SweepTable::to_csv() const {
    std::ostringstream os;
    os << "percent,unseen_acc,train_acc\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.percent, r.unseen_accuracy, r.train_accuracy);
        os << buf;
    }
    return os.str();
}

void SweepTable::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_csv();
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> default_percent_grid() {
    std::vector<double> grid;
    for (int p = 0; p <= 90; p += 5) grid.push_back(p);
    return grid;
}

SweepTable sweep_mask_percent(const SplitModel& model, std::span<const DomainDataset> train,
                              const DomainDataset& unseen, std::span<const double> percent_grid,
                              std::size_t repeats, std::uint64_t seed, std::size_t jobs) {
    if (percent_grid.empty() || percent_grid.front() != 0.0) throw UsageError("percent grid must start at 0");
    for (std::size_t i = 1; i < percent_grid.size(); ++i)
        if (!(percent_grid[i] > percent_grid[i - 1])) throw UsageError("percent grid must be strictly increasing");

    SweepTable table;
    table.importance = permutation_importance(model, train, repeats, seed, jobs);
    const Pool pool = pool_domains(train);
    const Tensor z_train = model.embed(pool.x);
    const Tensor z_unseen = model.embed(unseen.features);

    auto masked_acc = [&](const Tensor& z, std::span<const int> labels, const std::vector<double>& mask) {
        Tensor zm = z;
        for (std::size_t i = 0; i < zm.rows(); ++i)
            for (std::size_t k = 0; k < zm.cols(); ++k) zm(i, k) *= mask[k];
        return accuracy_from_logits(labels, model.predict_logits(zm));
    };

    double best_acc = -1.0;
    for (double p : percent_grid) {
        const auto mask = global_mask_from_scores(table.importance.scores, p);
        SweepRow row{p, masked_acc(z_unseen, unseen.labels, mask), masked_acc(z_train, pool.y, mask)};
        if (row.unseen_accuracy > best_acc) {
            best_acc = row.unseen_accuracy;
            table.best_percent = p;
        }
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace dispel
