#include "dispel/eval.hpp"

#include "dispel/error.hpp"
#include "dispel/losses.hpp"
#include "dispel/mask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace dispel {

std::string mask_source_name(const MaskSource& source) {
    switch (source.index()) {
    case 0: return "none";
    case 1: return "global";
    case 2: return "emg";
    default: return "explicit";
    }
}

Tensor resolve_masks(const SplitModel& model, const MaskSource& source, const Tensor& x) {
    const std::size_t n = x.rows(), d = model.embedding_dim();
    if (std::holds_alternative<NoMask>(source)) return Tensor::filled({n, d}, 1.0);
    if (const auto* g = std::get_if<GlobalMask>(&source)) {
        if (g->mask.size() != d)
            throw DimensionError("global mask has " + std::to_string(g->mask.size()) + " entries, embedding has " +
                                 std::to_string(d));
        Tensor out = Tensor::zeros({n, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) out(i, k) = g->mask[k];
        return out;
    }
    if (const auto* e = std::get_if<EmgMask>(&source)) {
        if (e->emg.generator.input_dim() != x.cols() || e->emg.generator.output_dim() != d)
            throw ConfigError("mask generator shape does not match the model");
        return e->emg.inference_masks(x);
    }
    const auto& explicit_masks = std::get<ExplicitMask>(source).masks;
    if (explicit_masks.shape() != Shape{n, d})
        throw DimensionError("explicit masks have shape " + shape_to_string(explicit_masks.shape()) + ", expected " +
                             shape_to_string(Shape{n, d}));
    return explicit_masks;
}

Tensor masked_embeddings(const SplitModel& model, const MaskSource& source, const Tensor& x) {
    Tensor z = model.embed(x);
    if (std::holds_alternative<NoMask>(source)) return z;
    return apply_mask(resolve_masks(model, source, x), z);
}

Tensor masked_logits(const SplitModel& model, const MaskSource& source, const Tensor& x) {
    return model.predict_logits(masked_embeddings(model, source, x));
}

double accuracy_from_logits(std::span<const int> labels, const Tensor& logits) {
    if (labels.empty()) throw UsageError("accuracy of an empty dataset");
    if (labels.size() != logits.rows()) throw DimensionError("label count does not match logit rows");
    const auto pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const SplitModel& model, const MaskSource& source, const DomainDataset& data) {
    if (data.size() == 0) throw UsageError("accuracy of an empty dataset");
    return accuracy_from_logits(data.labels, masked_logits(model, source, data.features));
}

double accuracy(const SplitModel& model, const MaskSource& source, const Pool& data) {
    if (data.size() == 0) throw UsageError("accuracy of an empty dataset");
    return accuracy_from_logits(data.y, masked_logits(model, source, data.x));
}

// ---------------------------------------------------------------------------
// Bound diagnostics

std::string to_string(DistanceKind kind) { return kind == DistanceKind::L2 ? "l2" : "l1"; }

DistanceKind distance_kind_from_string(const std::string& text) {
    if (text == "l2" || text == "L2") return DistanceKind::L2;
    if (text == "l1" || text == "L1") return DistanceKind::L1;
    throw ConfigError("unknown distance '" + text + "' (l1|l2)");
}

nlohmann::json BoundReport::to_json() const {
    return {{"distance", to_string(distance)},
            {"ge", ge},
            {"term_sh", term_sh},
            {"term_sp", term_sp},
            {"violation_count", violation_count},
            {"samples", samples},
            {"max_slack_used", max_slack_used},
            {"estimator", "sample mean over the evaluated rows"}};
}

namespace {

double row_distance(std::span<const double> a, std::span<const double> b, DistanceKind kind) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += kind == DistanceKind::L2 ? d * d : std::abs(d);
    }
    return kind == DistanceKind::L2 ? std::sqrt(s) : s;
}

Tensor keep_columns(const Tensor& z, const std::vector<bool>& keep) {
    Tensor out = z;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t k = 0; k < out.cols(); ++k)
            if (!keep[k]) out(i, k) = 0.0;
    return out;
}

}  // namespace

BoundReport bound_terms(const Mlp& predictor, const Tensor& z, const Tensor& masks,
                        std::span<const std::size_t> shared_dims, std::span<const std::size_t> specific_dims,
                        DistanceKind distance) {
    if (predictor.num_layers() != 1 || predictor.output_activation() != Activation::Identity)
        throw ContractError("bound diagnostics need an affine predictor");
    const std::size_t d = predictor.input_dim();
    if (z.rank() != 2 || z.cols() != d) throw DimensionError("embedding width does not match the predictor");
    if (masks.shape() != z.shape()) throw DimensionError("mask shape does not match the embeddings");

    std::vector<int> owner(d, -1);
    for (auto k : shared_dims) {
        if (k >= d || owner[k] != -1) throw ContractError("oracle dims do not partition the embedding");
        owner[k] = 0;
    }
    for (auto k : specific_dims) {
        if (k >= d || owner[k] != -1) throw ContractError("oracle dims do not partition the embedding");
        owner[k] = 1;
    }
    if (std::find(owner.begin(), owner.end(), -1) != owner.end())
        throw ContractError("oracle dims do not cover the embedding");

    std::vector<bool> is_shared(d), is_specific(d);
    for (std::size_t k = 0; k < d; ++k) {
        is_shared[k] = owner[k] == 0;
        is_specific[k] = owner[k] == 1;
    }
    const Tensor& weight = predictor.params().at(Mlp::weight_name(predictor.first_layer())).value;
    const Tensor z_masked = apply_mask(masks, z);
    const Tensor z_sh = keep_columns(z, is_shared);
    const Tensor z_sp = keep_columns(z, is_specific);

    const Tensor full = predictor.forward(z);
    const Tensor full_masked = predictor.forward(z_masked);
    const Tensor sh = matmul_values(z_sh, weight);
    const Tensor sh_masked = matmul_values(apply_mask(masks, z_sh), weight);
    const Tensor sp = matmul_values(z_sp, weight);
    const Tensor sp_masked = matmul_values(apply_mask(masks, z_sp), weight);

    BoundReport r;
    r.distance = distance;
    r.samples = z.rows();
    r.max_slack_used = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double ge = row_distance(full.row_span(i), full_masked.row_span(i), distance);
        const double a = row_distance(sh.row_span(i), sh_masked.row_span(i), distance);
        const double b = row_distance(sp.row_span(i), sp_masked.row_span(i), distance);
        r.ge += ge;
        r.term_sh += a;
        r.term_sp += b;
        r.max_slack_used = std::max(r.max_slack_used, ge - (a + b));
        if (ge > a + b + kBoundSlack) ++r.violation_count;
    }
    if (r.samples) {
        const double n = static_cast<double>(r.samples);
        r.ge /= n;
        r.term_sh /= n;
        r.term_sp /= n;
    } else {
        r.max_slack_used = 0.0;
    }
    return r;
}

BoundReport bound_terms(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                        const FeatureOracle& oracle, DistanceKind distance) {
    if (oracle.mixed) throw ContractError("oracle describes mixed features; no per-dimension split exists");
    if (!model.identity_encoder())
        throw ContractError("bound diagnostics need embedding dims that match oracle feature dims "
                            "(identity encoder)");
    const Tensor z = model.embed(data.features);
    return bound_terms(model.predictor(), z, resolve_masks(model, source, data.features), oracle.shared_dims,
                       oracle.specific_dims, distance);
}

// ---------------------------------------------------------------------------
// Export

namespace {

void write_matrix_rows(std::ofstream& out, const Tensor& values, std::size_t row) {
    char buf[32];
    for (std::size_t k = 0; k < values.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", values(row, k));
        out << ',' << buf;
    }
}

}  // namespace

void export_embeddings(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                       const std::filesystem::path& path) {
    data.validate();
    const Tensor z = masked_embeddings(model, source, data.features);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_id,label,domain";
    for (std::size_t k = 0; k < z.cols(); ++k) out << ",e" << k;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << i << ',' << data.labels[i] << ',' << data.domain_index;
        write_matrix_rows(out, z, i);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void export_masks(const SplitModel& model, const MaskSource& source, const DomainDataset& data,
                  const std::filesystem::path& path) {
    data.validate();
    const Tensor m = resolve_masks(model, source, data.features);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_id";
    for (std::size_t k = 0; k < m.cols(); ++k) out << ",m" << k;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << i;
        write_matrix_rows(out, m, i);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Reports

nlohmann::json RunReport::to_json() const {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [domain, s] : accuracy) acc[domain] = {{"mean", s.mean}, {"stderr", s.std_error}};
    return {{"accuracy", acc}, {"seeds", seeds}, {"config", config}, {"artifacts", artifacts}};
}

void RunReport::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

RunReport aggregate_runs(std::span<const AccuracyMap> reports, std::span<const std::uint64_t> seeds) {
    if (reports.empty()) throw UsageError("aggregate_runs needs at least one report");
    if (seeds.size() != reports.size()) throw UsageError("one seed per report is required");
    std::set<std::string> domains;
    for (const auto& [k, _] : reports.front()) domains.insert(k);
    for (const auto& r : reports) {
        std::set<std::string> keys;
        for (const auto& [k, v] : r) {
            keys.insert(k);
            if (!(v >= 0.0 && v <= 1.0)) throw UsageError("accuracy outside [0, 1] for domain '" + k + "'");
        }
        if (keys != domains) throw UsageError("runs report different domain sets");
    }
    RunReport out;
    out.seeds.assign(seeds.begin(), seeds.end());
    const double n = static_cast<double>(reports.size());
    for (const auto& domain : domains) {
        const double first = reports.front().at(domain);
        const bool constant = std::all_of(reports.begin(), reports.end(),
                                          [&](const AccuracyMap& r) { return r.at(domain) == first; });
        if (constant) {
            out.accuracy[domain] = Stat{first, 0.0};
            continue;
        }
        double mean = 0.0;
        for (const auto& r : reports) mean += r.at(domain);
        mean /= n;
        double var = 0.0;
        for (const auto& r : reports) var += (r.at(domain) - mean) * (r.at(domain) - mean);
        const double stderr_value = reports.size() > 1 ? std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
        out.accuracy[domain] = Stat{mean, stderr_value};
    }
    return out;
}

}  // namespace dispel
