#include "dispel/synthbench.hpp"

#include "dispel/error.hpp"
#include "dispel/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dispel {

void BenchmarkSpec::validate() const {
    if (num_classes < 2) throw ConfigError("benchmark needs at least 2 classes");
    if (num_train_domains < 1) throw ConfigError("benchmark needs at least 1 training domain");
    if (shared_dims < 1 || specific_dims < 1) throw ConfigError("feature block sizes must be >= 1");
    if (samples_per_domain < 1 || unseen_samples < 1) throw ConfigError("sample counts must be >= 1");
    if (!(spurious_strength >= 0.0 && spurious_strength <= 1.0))
        throw ConfigError("spurious_strength must lie in [0, 1]");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
}

namespace {

constexpr std::uint64_t kMeansStream = 0x6d65616e73ULL;
constexpr std::uint64_t kMapStream = 0x6d6170ULL;
constexpr std::uint64_t kRotationStream = 0x726f74ULL;
constexpr std::uint64_t kSampleStream = 0x73616d70ULL;
constexpr std::size_t kMaxRejections = 10000;

// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
// signs of R's diagonal folded into Q).
Eigen::MatrixXd random_orthogonal(std::size_t n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    return q;
}

// d_sp x d_sh map: the leading block of a square orthogonal matrix, which is
// itself orthogonal when the blocks have equal width.
Tensor random_block_map(std::size_t rows, std::size_t cols, Rng& rng) {
    const Eigen::MatrixXd q = random_orthogonal(std::max(rows, cols), rng);
    Tensor out = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

double frobenius_distance(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Tensor draw_class_means(const BenchmarkSpec& spec, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double max_cos = std::cos(std::numbers::pi / 6.0);
    Tensor means = Tensor::zeros({spec.num_classes, spec.shared_dims});
    std::size_t tries = 0;
    for (std::size_t c = 0; c < spec.num_classes;) {
        if (++tries > kMaxRejections)
            throw ConfigError("could not place " + std::to_string(spec.num_classes) +
                              " class means at >= 30 degrees apart in " + std::to_string(spec.shared_dims) +
                              " dimensions");
        std::vector<double> v(spec.shared_dims);
        double norm = 0.0;
        for (double& x : v) {
            x = normal(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (double& x : v) x /= norm;
        bool ok = true;
        for (std::size_t prev = 0; prev < c && ok; ++prev) {
            double dot = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * means(prev, k);
            ok = dot <= max_cos;
        }
        if (!ok) continue;
        for (std::size_t k = 0; k < v.size(); ++k) means(c, k) = v[k];
        ++c;
    }
    return means;
}

DomainDataset draw_domain(const BenchmarkSpec& spec, const Tensor& means, const Tensor& map,
                          const std::optional<Tensor>& rotation, std::size_t n, int domain_index, Rng rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> label_dist(0, static_cast<int>(spec.num_classes) - 1);
    const std::size_t dsh = spec.shared_dims, dsp = spec.specific_dims, D = spec.num_features();
    const double rho = spec.spurious_strength;
    DomainDataset out;
    out.domain_index = domain_index;
    out.features = Tensor::zeros({n, D});
    out.labels.resize(n);
    std::vector<double> row(D);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = label_dist(rng);
        out.labels[i] = y;
        const auto mu = means.row_span(static_cast<std::size_t>(y));
        for (std::size_t k = 0; k < dsh; ++k) row[k] = mu[k] + spec.noise_sigma * normal(rng);
        for (std::size_t k = 0; k < dsp; ++k) {
            double a_mu = 0.0;
            for (std::size_t j = 0; j < dsh; ++j) a_mu += map(k, j) * mu[j];
            row[dsh + k] = rho * a_mu + (1.0 - rho) * normal(rng);
        }
        if (rotation) {
            for (std::size_t r = 0; r < D; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < D; ++k) acc += (*rotation)(r, k) * row[k];
                out.features(i, r) = acc;
            }
        } else {
            for (std::size_t k = 0; k < D; ++k) out.features(i, k) = row[k];
        }
    }
    return out;
}

}  // namespace

Benchmark generate_benchmark(const BenchmarkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Benchmark bench;

    Rng mean_rng = derive_rng(seed, {kMeansStream});
    bench.class_means = draw_class_means(spec, mean_rng);

    FeatureOracle& oracle = bench.oracle;
    for (std::size_t k = 0; k < spec.shared_dims; ++k) oracle.shared_dims.push_back(k);
    for (std::size_t k = 0; k < spec.specific_dims; ++k) oracle.specific_dims.push_back(spec.shared_dims + k);
    oracle.mixed = spec.mixing;

    Rng map_rng = derive_rng(seed, {kMapStream});
    for (std::size_t d = 0; d < spec.num_train_domains; ++d)
        oracle.domain_maps.push_back(random_block_map(spec.specific_dims, spec.shared_dims, map_rng));
    for (std::size_t attempt = 0;; ++attempt) {
        if (attempt >= kMaxRejections) throw ConfigError("could not draw a distinct unseen-domain map");
        oracle.unseen_map = random_block_map(spec.specific_dims, spec.shared_dims, map_rng);
        bool distinct = true;
        for (const auto& a : oracle.domain_maps) distinct = distinct && frobenius_distance(a, oracle.unseen_map) > 1e-6;
        if (distinct) break;
    }

    std::optional<Tensor> rotation;
    if (spec.mixing) {
        Rng rot_rng = derive_rng(seed, {kRotationStream});
        rotation = random_block_map(spec.num_features(), spec.num_features(), rot_rng);
    }

    for (std::size_t d = 0; d < spec.num_train_domains; ++d) {
        DomainDataset dom = draw_domain(spec, bench.class_means, oracle.domain_maps[d], rotation,
                                        spec.samples_per_domain, static_cast<int>(d),
                                        derive_rng(seed, {kSampleStream, d}));
        dom.oracle = oracle;
        bench.train.push_back(std::move(dom));
    }
    bench.unseen = draw_domain(spec, bench.class_means, oracle.unseen_map, rotation, spec.unseen_samples,
                               static_cast<int>(spec.num_train_domains),
                               derive_rng(seed, {kSampleStream, spec.num_train_domains}));
    bench.unseen.oracle = oracle;
    return bench;
}

// ---------------------------------------------------------------------------
// CSV

CsvSchema CsvSchema::standard(std::size_t num_features, bool with_domain) {
    CsvSchema s;
    for (std::size_t k = 0; k < num_features; ++k) s.feature_columns.push_back("f" + std::to_string(k));
    if (with_domain) s.domain_column = "domain";
    return s;
}

void write_csv_dataset(const DomainDataset& data, const std::filesystem::path& path, bool with_domain) {
    data.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t D = data.num_features();
    for (std::size_t k = 0; k < D; ++k) out << 'f' << k << ',';
    out << "label";
    if (with_domain) out << ",domain";
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t k = 0; k < D; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", data.features(i, k));
            out << buf << ',';
        }
        out << data.labels[i];
        if (with_domain) out << ',' << data.domain_index;
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string_view s = trim(raw);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("data row " + std::to_string(row - 1) + " (line " + std::to_string(row) + ")" + ", column '" + column + "': invalid number '" +
                         std::string(s) + "'");
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value))
            throw ParseError("data row " + std::to_string(row - 1) + " (line " + std::to_string(row) + ")" + ", column '" + column + "': non-finite value");
    }
    return value;
}

}  // namespace

DomainDataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw ParseError(path.string() + ": empty file, no header");
    const auto header = split_csv_line(std::string(trim(line)));
    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw ParseError(path.string() + ": missing column '" + name + "'");
    };
    std::vector<std::size_t> feat_idx;
    for (const auto& name : schema.feature_columns) feat_idx.push_back(column_of(name));
    const std::size_t label_idx = column_of(schema.label_column);
    std::optional<std::size_t> domain_idx;
    if (schema.domain_column) domain_idx = column_of(*schema.domain_column);

    DomainDataset out;
    std::vector<double> values;
    std::optional<int> domain;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("data row " + std::to_string(row - 1) + " (line " + std::to_string(row) + ")" + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        for (std::size_t k = 0; k < feat_idx.size(); ++k)
            values.push_back(parse_cell<double>(cells[feat_idx[k]], row, schema.feature_columns[k]));
        const int label = parse_cell<int>(cells[label_idx], row, schema.label_column);
        if (label < 0) throw ParseError("data row " + std::to_string(row - 1) + " (line " + std::to_string(row) + ")" + ": negative label");
        out.labels.push_back(label);
        if (domain_idx) {
            const int dv = parse_cell<int>(cells[*domain_idx], row, *schema.domain_column);
            if (domain && *domain != dv)
                throw ParseError("data row " + std::to_string(row - 1) + " (line " + std::to_string(row) + ")" + ": domain " + std::to_string(dv) +
                                 " differs from earlier rows (" + std::to_string(*domain) + ")");
            domain = dv;
        }
    }
    out.features = Tensor::matrix(out.labels.size(), feat_idx.size(), std::move(values));
    out.domain_index = domain.value_or(0);
    return out;
}

DomainDataset load_csv_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw ParseError(path.string() + ": empty file, no header");
    std::size_t features = 0;
    bool with_domain = false;
    for (const auto& cell : split_csv_line(std::string(trim(line)))) {
        const auto name = trim(cell);
        if (name == "domain") with_domain = true;
        else if (name.size() > 1 && name.front() == 'f') ++features;
    }
    return load_csv_dataset(path, CsvSchema::standard(features, with_domain));
}

// ---------------------------------------------------------------------------
// Oracle file

namespace {

nlohmann::json tensor_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"data", t.storage()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

void write_oracle(const FeatureOracle& oracle, const std::filesystem::path& path) {
    nlohmann::json j;
    j["shared_dims"] = oracle.shared_dims;
    j["specific_dims"] = oracle.specific_dims;
    j["mixed"] = oracle.mixed;
    j["domain_maps"] = nlohmann::json::array();
    for (const auto& m : oracle.domain_maps) j["domain_maps"].push_back(tensor_json(m));
    j["unseen_map"] = tensor_json(oracle.unseen_map);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

FeatureOracle read_oracle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        FeatureOracle o;
        o.shared_dims = j.at("shared_dims").get<std::vector<std::size_t>>();
        o.specific_dims = j.at("specific_dims").get<std::vector<std::size_t>>();
        o.mixed = j.at("mixed").get<bool>();
        for (const auto& m : j.at("domain_maps")) o.domain_maps.push_back(tensor_from_json(m));
        o.unseen_map = tensor_from_json(j.at("unseen_map"));
        return o;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace dispel
