#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aput/errors.hpp"
#include "aput/random.hpp"

namespace aput {

/// Finite hypothesis grid: N secret values, M useful values, with optional
/// display labels per index.
struct HypothesisSpace {
    int n_secret = 0;
    int n_useful = 0;
    std::vector<std::string> secret_labels; // empty or exactly n_secret entries
    std::vector<std::string> useful_labels; // empty or exactly n_useful entries

    HypothesisSpace() = default;
    HypothesisSpace(int n_s, int n_u,
                    std::vector<std::string> s_labels = {},
                    std::vector<std::string> u_labels = {})
        : n_secret(n_s), n_useful(n_u),
          secret_labels(std::move(s_labels)), useful_labels(std::move(u_labels)) {
        if (n_secret < 2 || n_useful < 2)
            throw ConfigError("hypothesis space needs at least 2 secret and 2 useful values");
        if (!secret_labels.empty() && static_cast<int>(secret_labels.size()) != n_secret)
            throw ConfigError("secret_labels size does not match n_secret");
        if (!useful_labels.empty() && static_cast<int>(useful_labels.size()) != n_useful)
            throw ConfigError("useful_labels size does not match n_useful");
    }
};

/// KL divergence in nats between two distributions of equal length.
/// Returns +infinity when p puts mass where q has none; 0*log(0/x) = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw UsageError("kl_divergence: length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

/// Conditional observation law q(z | a, s, u) on a finite alphabet, stored
/// dense as [action][secret][useful][obs]. Every row over z is a probability
/// distribution; validated on construction.
class ObservationModel {
public:
    ObservationModel(HypothesisSpace spaces, int n_actions, int n_obs,
                     std::vector<double> probs)
        : spaces_(std::move(spaces)), n_actions_(n_actions), n_obs_(n_obs),
          probs_(std::move(probs)) {
        if (n_actions_ < 1) throw ConfigError("observation model needs at least one action");
        if (n_obs_ < 1) throw ConfigError("observation model needs a nonempty observation alphabet");
        const std::size_t expect = static_cast<std::size_t>(n_actions_) * spaces_.n_secret *
                                   spaces_.n_useful * n_obs_;
        if (probs_.size() != expect)
            throw ConfigError("observation probability table has wrong size");
        for (int a = 0; a < n_actions_; ++a)
            for (int s = 0; s < spaces_.n_secret; ++s)
                for (int u = 0; u < spaces_.n_useful; ++u) {
                    double sum = 0.0;
                    for (int z = 0; z < n_obs_; ++z) {
                        const double v = prob(a, s, u, z);
                        if (v < 0.0 || v > 1.0)
                            throw ConfigError("observation probability out of [0,1]");
                        sum += v;
                    }
                    if (std::abs(sum - 1.0) > 1e-12)
                        throw ConfigError("observation row does not sum to 1");
                }
    }

    const HypothesisSpace& spaces() const { return spaces_; }
    int n_actions() const { return n_actions_; }
    int n_obs() const { return n_obs_; }
    int n_secret() const { return spaces_.n_secret; }
    int n_useful() const { return spaces_.n_useful; }

    double prob(int a, int s, int u, int z) const {
        return probs_[offset(a, s, u) + static_cast<std::size_t>(z)];
    }

    /// The distribution over z for a fixed (action, secret, useful) triple.
    std::span<const double> row(int a, int s, int u) const {
        return {probs_.data() + offset(a, s, u), static_cast<std::size_t>(n_obs_)};
    }

    std::span<const double> raw() const { return probs_; }

private:
    std::size_t offset(int a, int s, int u) const {
        return ((static_cast<std::size_t>(a) * spaces_.n_secret + s) * spaces_.n_useful + u) *
               n_obs_;
    }

    HypothesisSpace spaces_;
    int n_actions_;
    int n_obs_;
    std::vector<double> probs_;
};

/// Joint law p0(s, u) over the hypothesis grid, row-major in s.
struct Prior {
    int n_secret = 0;
    int n_useful = 0;
    std::vector<double> joint;

    Prior(int n_s, int n_u, std::vector<double> j)
        : n_secret(n_s), n_useful(n_u), joint(std::move(j)) {
        if (static_cast<int>(joint.size()) != n_secret * n_useful)
            throw ConfigError("prior has wrong size");
        double sum = 0.0;
        for (double v : joint) {
            if (v < 0.0) throw ConfigError("prior has a negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("prior does not sum to 1");
    }

    static Prior uniform(int n_s, int n_u) {
        return Prior(n_s, n_u,
                     std::vector<double>(static_cast<std::size_t>(n_s) * n_u,
                                         1.0 / (static_cast<double>(n_s) * n_u)));
    }

    double at(int s, int u) const { return joint[static_cast<std::size_t>(s) * n_useful + u]; }

    std::vector<double> secret_marginal() const {
        std::vector<double> m(n_secret, 0.0);
        for (int s = 0; s < n_secret; ++s)
            for (int u = 0; u < n_useful; ++u) m[s] += at(s, u);
        return m;
    }
};

/// Per unordered pair (u, u'): the action under which the two useful
/// hypotheses are distinguishable for every secret value, if one exists.
struct PairWitness {
    int u0 = 0;
    int u1 = 0;
    std::optional<int> action; // empty when the pair is not distinguishable
};

struct IdentifiabilityReport {
    bool ok = false;
    std::vector<PairWitness> witnesses;
};

/// A model is identifiable when for every u != u' some single action gives
/// positive divergence between the observation laws for all secrets.
inline IdentifiabilityReport check_identifiability(const ObservationModel& model) {
    constexpr double kTol = 1e-12;
    IdentifiabilityReport report;
    report.ok = true;
    const int m = model.n_useful();
    for (int u0 = 0; u0 < m; ++u0)
        for (int u1 = u0 + 1; u1 < m; ++u1) {
            PairWitness w{u0, u1, std::nullopt};
            for (int a = 0; a < model.n_actions() && !w.action; ++a) {
                bool all_positive = true;
                for (int s = 0; s < model.n_secret(); ++s) {
                    const double kl = kl_divergence(model.row(a, s, u0), model.row(a, s, u1));
                    if (!(kl > kTol)) { all_positive = false; break; }
                }
                if (all_positive) w.action = a;
            }
            if (!w.action) report.ok = false;
            report.witnesses.push_back(w);
        }
    return report;
}

/// Synthetic observation model. Action a "discloses" secret
/// s* = N-1 - (a mod N): cells (s*, u) get Gaussian mean u+1, every other
/// cell mean 0 (so e.g. with N=3, action 0 discloses s=2, action 1 discloses
/// s=1, action 2 discloses s=0). Each row is the Gaussian density evaluated
/// at bin centers x(z) = z*(M+1)/n_obs and renormalized; sigma is drawn
/// uniformly from [sigma_lo, sigma_hi] per (a, s, u) in row-major draw order.
/// Bit-reproducible for a fixed seed.
inline ObservationModel build_synthetic(std::uint64_t seed, int n_actions, int n_secret,
                                        int n_useful, int n_obs, double sigma_lo,
                                        double sigma_hi) {
    if (n_actions < 1) throw ConfigError("build_synthetic: n_actions must be >= 1");
    if (n_secret < 2 || n_useful < 2)
        throw ConfigError("build_synthetic: need at least 2 secret and 2 useful values");
    if (n_obs < 2) throw ConfigError("build_synthetic: n_obs must be >= 2");
    if (!(sigma_lo > 0.0) || sigma_lo > sigma_hi)
        throw ConfigError("build_synthetic: need 0 < sigma_lo <= sigma_hi");

    Rng rng(seed);
    const double scale = static_cast<double>(n_useful + 1) / n_obs;
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(n_actions) * n_secret * n_useful * n_obs);
    for (int a = 0; a < n_actions; ++a) {
        const int disclosed = n_secret - 1 - (a % n_secret);
        for (int s = 0; s < n_secret; ++s)
            for (int u = 0; u < n_useful; ++u) {
                const double sigma = rng.uniform(sigma_lo, sigma_hi);
                const double mu = (s == disclosed) ? static_cast<double>(u + 1) : 0.0;
                double sum = 0.0;
                const std::size_t base = probs.size();
                for (int z = 0; z < n_obs; ++z) {
                    const double x = z * scale;
                    const double d = (x - mu) / sigma;
                    const double w = std::exp(-0.5 * d * d);
                    probs.push_back(w);
                    sum += w;
                }
                for (int z = 0; z < n_obs; ++z) probs[base + z] /= sum;
            }
    }
    return ObservationModel(HypothesisSpace(n_secret, n_useful), n_actions, n_obs,
                            std::move(probs));
}

// ---------------------------------------------------------------------------
// Empirical fitting from labeled sensor readings
// ---------------------------------------------------------------------------

struct SensorRecord {
    int action = 0;
    double reading = 0.0;
    int secret = 0;
    int useful = 0;
};

struct SensorDataset {
    std::vector<SensorRecord> records;
    HypothesisSpace spaces;
    int n_actions = 0;
};

namespace detail {

inline bool parse_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stol(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

/// Maps a column of label strings to dense indices. All-integer labels are
/// used as indices directly; otherwise distinct labels are sorted
/// lexicographically. When an expected label list is given, every value must
/// be in it (by label, or by index for integer strings).
class LabelMapper {
public:
    explicit LabelMapper(std::vector<std::string> expected = {})
        : expected_(std::move(expected)) {}

    void observe(const std::string& v, long row) {
        long idx = 0;
        if (!expected_.empty()) {
            auto it = std::find(expected_.begin(), expected_.end(), v);
            if (it == expected_.end()) {
                if (parse_int(v, idx) && idx >= 0 &&
                    idx < static_cast<long>(expected_.size()))
                    return;
                throw IngestError("unknown label '" + v + "'", row);
            }
            return;
        }
        if (all_int_ && !parse_int(v, idx)) all_int_ = false;
        if (all_int_ && idx < 0) all_int_ = false;
        seen_.insert({v, 0});
    }

    void finalize() {
        if (!expected_.empty()) {
            count_ = static_cast<int>(expected_.size());
            return;
        }
        if (all_int_) {
            long max_idx = 0;
            for (auto& [k, v] : seen_) {
                long idx = 0;
                parse_int(k, idx);
                v = static_cast<int>(idx);
                max_idx = std::max(max_idx, idx);
            }
            count_ = static_cast<int>(max_idx + 1);
        } else {
            int next = 0;
            for (auto& [k, v] : seen_) v = next++; // std::map iterates sorted
            count_ = next;
        }
    }

    int index(const std::string& v) const {
        if (!expected_.empty()) {
            auto it = std::find(expected_.begin(), expected_.end(), v);
            if (it != expected_.end())
                return static_cast<int>(it - expected_.begin());
            long idx = 0;
            parse_int(v, idx);
            return static_cast<int>(idx);
        }
        return seen_.at(v);
    }

    int count() const { return count_; }

    std::vector<std::string> labels() const {
        if (!expected_.empty()) return expected_;
        if (all_int_) return {};
        std::vector<std::string> out(count_);
        for (const auto& [k, v] : seen_) out[v] = k;
        return out;
    }

private:
    std::vector<std::string> expected_;
    std::map<std::string, int> seen_;
    bool all_int_ = true;
    int count_ = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

} // namespace detail

/// Reads the `action,reading,secret,useful` CSV schema. Rows may come in any
/// order. When `spaces` carries labels, unknown secret/useful labels are
/// ingestion errors; otherwise label sets are inferred from the data.
inline SensorDataset parse_sensor_csv(std::istream& in,
                                      const std::optional<HypothesisSpace>& spaces = {}) {
    std::string line;
    if (!std::getline(in, line)) throw IngestError("empty input");
    auto header = detail::split_csv_line(line);
    const std::vector<std::string> want = {"action", "reading", "secret", "useful"};
    if (header != want)
        throw IngestError("expected header 'action,reading,secret,useful'", 1);

    std::vector<std::array<std::string, 4>> raw;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 4) throw IngestError("expected 4 fields", row);
        raw.push_back({f[0], f[1], f[2], f[3]});
    }
    if (raw.empty()) throw IngestError("no data rows");

    detail::LabelMapper actions, secrets(spaces ? spaces->secret_labels : std::vector<std::string>{}),
        usefuls(spaces ? spaces->useful_labels : std::vector<std::string>{});
    row = 1;
    for (const auto& f : raw) {
        ++row;
        actions.observe(f[0], row);
        secrets.observe(f[2], row);
        usefuls.observe(f[3], row);
        double x = 0.0;
        if (!detail::parse_double(f[1], x))
            throw IngestError("non-numeric reading '" + f[1] + "'", row);
    }
    actions.finalize();
    secrets.finalize();
    usefuls.finalize();

    SensorDataset ds;
    ds.n_actions = actions.count();
    const int n_s = spaces ? spaces->n_secret : secrets.count();
    const int n_u = spaces ? spaces->n_useful : usefuls.count();
    if (n_s < 2 || n_u < 2)
        throw IngestError("need at least 2 distinct secret and useful labels");
    ds.spaces = HypothesisSpace(n_s, n_u, secrets.labels(), usefuls.labels());
    row = 1;
    for (const auto& f : raw) {
        ++row;
        SensorRecord r;
        r.action = actions.index(f[0]);
        detail::parse_double(f[1], r.reading);
        r.secret = secrets.index(f[2]);
        r.useful = usefuls.index(f[3]);
        if (r.secret >= n_s || r.useful >= n_u || r.secret < 0 || r.useful < 0)
            throw IngestError("label index out of range", row);
        ds.records.push_back(r);
    }
    return ds;
}

/// Empirical observation model: per action, readings are quantized into
/// n_obs equal-frequency bins computed from that action's pooled readings;
/// cell laws are smoothed relative frequencies,
/// (count + smoothing) / (total + smoothing * n_obs).
inline ObservationModel fit_from_records(const SensorDataset& ds, int n_obs,
                                         double smoothing) {
    if (n_obs < 2) throw ConfigError("fit: n_obs must be >= 2");
    if (smoothing < 0.0) throw ConfigError("fit: smoothing must be nonnegative");
    const int n_a = ds.n_actions;
    const int n_s = ds.spaces.n_secret;
    const int n_u = ds.spaces.n_useful;

    // Equal-frequency cutpoints per action: c_k = sorted[floor(n*k/n_obs)],
    // bin(x) = #{k : x >= c_k}. With distinct readings the bin occupancies
    // differ by at most one.
    std::vector<std::vector<double>> cuts(n_a);
    for (int a = 0; a < n_a; ++a) {
        std::vector<double> pool;
        for (const auto& r : ds.records)
            if (r.action == a) pool.push_back(r.reading);
        if (pool.empty()) continue; // smoothing-only rows
        std::sort(pool.begin(), pool.end());
        const std::size_t n = pool.size();
        for (int k = 1; k < n_obs; ++k)
            cuts[a].push_back(pool[(n * static_cast<std::size_t>(k)) / n_obs]);
    }

    std::vector<double> counts(static_cast<std::size_t>(n_a) * n_s * n_u * n_obs, 0.0);
    auto idx = [&](int a, int s, int u, int z) {
        return ((static_cast<std::size_t>(a) * n_s + s) * n_u + u) * n_obs + z;
    };
    for (const auto& r : ds.records) {
        int z = 0;
        for (double c : cuts[r.action])
            if (r.reading >= c) ++z;
        counts[idx(r.action, r.secret, r.useful, z)] += 1.0;
    }

    std::vector<double> probs(counts.size(), 0.0);
    for (int a = 0; a < n_a; ++a)
        for (int s = 0; s < n_s; ++s)
            for (int u = 0; u < n_u; ++u) {
                double total = 0.0;
                for (int z = 0; z < n_obs; ++z) total += counts[idx(a, s, u, z)];
                if (total == 0.0 && smoothing == 0.0)
                    throw ConfigError("combination (a=" + std::to_string(a) + ", s=" +
                                      std::to_string(s) + ", u=" + std::to_string(u) +
                                      ") has no data and smoothing is 0");
                const double denom = total + smoothing * n_obs;
                for (int z = 0; z < n_obs; ++z)
                    probs[idx(a, s, u, z)] = (counts[idx(a, s, u, z)] + smoothing) / denom;
            }
    return ObservationModel(ds.spaces, n_a, n_obs, std::move(probs));
}

inline ObservationModel fit_from_csv(std::istream& in, int n_obs, double smoothing,
                                     const std::optional<HypothesisSpace>& spaces = {}) {
    return fit_from_records(parse_sensor_csv(in, spaces), n_obs, smoothing);
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const ObservationModel& model) {
    nlohmann::json spaces = {{"n_secret", model.n_secret()}, {"n_useful", model.n_useful()}};
    if (!model.spaces().secret_labels.empty())
        spaces["secret_labels"] = model.spaces().secret_labels;
    if (!model.spaces().useful_labels.empty())
        spaces["useful_labels"] = model.spaces().useful_labels;
    nlohmann::json probs = nlohmann::json::array();
    for (int a = 0; a < model.n_actions(); ++a) {
        nlohmann::json ja = nlohmann::json::array();
        for (int s = 0; s < model.n_secret(); ++s) {
            nlohmann::json js = nlohmann::json::array();
            for (int u = 0; u < model.n_useful(); ++u) {
                const auto row = model.row(a, s, u);
                js.push_back(std::vector<double>(row.begin(), row.end()));
            }
            ja.push_back(std::move(js));
        }
        probs.push_back(std::move(ja));
    }
    return {{"spaces", spaces},
            {"n_actions", model.n_actions()},
            {"n_obs", model.n_obs()},
            {"probs", probs}};
}

inline ObservationModel model_from_json(const nlohmann::json& j) {
    try {
        const auto& sp = j.at("spaces");
        HypothesisSpace spaces(sp.at("n_secret").get<int>(), sp.at("n_useful").get<int>(),
                               sp.value("secret_labels", std::vector<std::string>{}),
                               sp.value("useful_labels", std::vector<std::string>{}));
        const int n_actions = j.at("n_actions").get<int>();
        const int n_obs = j.at("n_obs").get<int>();
        std::vector<double> probs;
        for (const auto& ja : j.at("probs"))
            for (const auto& js : ja)
                for (const auto& ju : js)
                    for (const auto& v : ju) probs.push_back(v.get<double>());
        return ObservationModel(std::move(spaces), n_actions, n_obs, std::move(probs));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
}

} // namespace aput
