#include "dispel/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dispel {

namespace {

enum class Kind { String, Uint, Double, Bool, UintList, DoubleList, Mode, Distance };

struct KeyInfo {
    const char* key;
    const char* fallback;
    Kind kind;
};

constexpr KeyInfo kKeys[] = {
    {"seed", "0", Kind::Uint},
    {"out.dir", "runs/default", Kind::String},
    {"data.dir", "", Kind::String},
    {"base.dir", "", Kind::String},
    {"emg.dir", "", Kind::String},
    {"bench.num_classes", "5", Kind::Uint},
    {"bench.shared_dims", "8", Kind::Uint},
    {"bench.specific_dims", "8", Kind::Uint},
    {"bench.num_train_domains", "3", Kind::Uint},
    {"bench.samples_per_domain", "1000", Kind::Uint},
    {"bench.unseen_samples", "1000", Kind::Uint},
    {"bench.spurious_strength", "0.9", Kind::Double},
    {"bench.noise_sigma", "0.5", Kind::Double},
    {"bench.mixing", "false", Kind::Bool},
    {"model.hidden", "32", Kind::UintList},
    {"model.split_index", "", Kind::Uint},
    {"train.batch_size", "64", Kind::Uint},
    {"train.learning_rate", "0.001", Kind::Double},
    {"train.max_epochs", "200", Kind::Uint},
    {"train.patience", "10", Kind::Uint},
    {"train.val_fraction", "0.2", Kind::Double},
    {"emg.hidden", "32", Kind::UintList},
    {"emg.hard_target", "false", Kind::Bool},
    {"mask.tau", "0.1", Kind::Double},
    {"mask.inference_mode", "noise_free", Kind::Mode},
    {"mask.samples", "1", Kind::Uint},
    {"mask.uniform_clamp_eps", "1e-12", Kind::Double},
    {"eval.mode", "none", Kind::String},
    {"global.percent", "", Kind::Double},
    {"importance.repeats", "5", Kind::Uint},
    {"sweep.grid", "0,5,10,15,20,25,30,35,40,45,50,55,60,65,70,75,80,85,90", Kind::DoubleList},
    {"pipeline.train_seeds", "0,1,2", Kind::UintList},
    {"bound.distance", "l2", Kind::Distance},
    {"bound.domain", "unseen", Kind::String},
    {"export.domain", "unseen", Kind::String},
    {"export.masks", "false", Kind::Bool},
};

const KeyInfo* find_key(const std::string& key) {
    for (const auto& k : kKeys)
        if (key == k.key) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out) {
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if constexpr (std::is_unsigned_v<T>)
        if (*first == '-' || *first == '+') return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

template <class T>
bool parse_list(const std::string& text, std::vector<T>& out) {
    out.clear();
    if (trim(text).empty()) return true;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        T v{};
        if (!parse_number(trim(item), v)) return false;
        out.push_back(v);
    }
    return !text.empty() && text.back() != ',';
}

// Returns an error message, or empty when `value` fits `kind`.
std::string check_value(Kind kind, const std::string& value) {
    std::uint64_t u{};
    double d{};
    std::vector<std::size_t> ul;
    std::vector<double> dl;
    switch (kind) {
    case Kind::String: return {};
    case Kind::Uint:
        return value.empty() || parse_number(value, u) ? "" : "expected a non-negative integer";
    case Kind::Double:
        return value.empty() || parse_number(value, d) ? "" : "expected a number";
    case Kind::Bool: return value == "true" || value == "false" ? "" : "expected true or false";
    case Kind::UintList: return parse_list(value, ul) ? "" : "expected a comma-separated integer list";
    case Kind::DoubleList: return parse_list(value, dl) ? "" : "expected a comma-separated number list";
    case Kind::Mode:
        return value == "noise_free" || value == "expected" || value == "sample_avg"
                   ? ""
                   : "expected noise_free, expected or sample_avg";
    case Kind::Distance: return value == "l2" || value == "l1" ? "" : "expected l2 or l1";
    }
    return {};
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& k : kKeys) out.emplace_back(k.key);
        std::sort(out.begin(), out.end());
        return out;
    }();
    return keys;
}

void RunConfig::assign(const std::string& key, const std::string& value, std::size_t line, std::size_t key_col,
                       std::size_t value_col) {
    const KeyInfo* info = find_key(key);
    if (!info) throw ConfigParseError(line, key_col, "unknown key '" + key + "'");
    if (key == "seed" && value.empty()) throw ConfigParseError(line, value_col, "seed needs a value");
    if (auto msg = check_value(info->kind, value); !msg.empty())
        throw ConfigParseError(line, value_col, "bad value for '" + key + "': " + msg);
    values_[key] = value;
    explicit_[key] = true;
    if (key == "seed") seed_set_ = true;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto first = raw.find_first_not_of(" \t\r");
        if (first == std::string::npos || raw[first] == '#') continue;
        const auto eq = raw.find('=');
        if (eq == std::string::npos) throw ConfigParseError(line_no, first + 1, "expected 'key = value'");
        const std::string key = trim(raw.substr(0, eq));
        if (key.empty()) throw ConfigParseError(line_no, first + 1, "missing key before '='");
        const std::string rest = raw.substr(eq + 1);
        const auto vpos = rest.find_first_not_of(" \t");
        const std::size_t value_col = eq + 2 + (vpos == std::string::npos ? 0 : vpos);
        if (auto it = seen.find(key); it != seen.end())
            throw ConfigParseError(line_no, first + 1,
                                   "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
        seen[key] = line_no;
        cfg.assign(key, trim(rest), line_no, first + 1, value_col);
    }
    if (!cfg.seed_set_) throw ConfigParseError(line_no + 1, 1, "missing required key 'seed'");
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("config file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigParseError(0, 1, "override must be key=value: '" + assignment + "'");
    assign(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), 0, 1, eq + 2);
}

std::uint64_t RunConfig::seed() const {
    if (!seed_set_) throw ConfigError("config must set 'seed'");
    return get_uint("seed");
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
}

bool RunConfig::is_set(const std::string& key) const { return !get(key).empty(); }

double RunConfig::get_double(const std::string& key) const {
    double v{};
    if (!parse_number(get(key), v)) throw ConfigError("'" + key + "' has no numeric value");
    return v;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
    std::uint64_t v{};
    if (!parse_number(get(key), v)) throw ConfigError("'" + key + "' has no integer value");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::size_t> RunConfig::get_uint_list(const std::string& key) const {
    std::vector<std::size_t> out;
    if (!parse_list(get(key), out)) throw ConfigError("'" + key + "' is not an integer list");
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    if (!parse_list(get(key), out)) throw ConfigError("'" + key + "' is not a number list");
    return out;
}

std::string RunConfig::snapshot() const {
    std::ostringstream os;
    for (const auto& key : known_keys()) os << key << " = " << values_.at(key) << '\n';
    return os.str();
}

}  // namespace dispel
