#pragma once

// Flat experiment config: one `section.key = value` per line, `#` starts a
// comment. Unknown keys and malformed values raise ConfigError naming the key.

#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

#include "specclip/noise.hpp"
#include "specclip/optim.hpp"
#include "specclip/threshold.hpp"

namespace specclip {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error("config error: " + (field.empty() ? std::string{} : field + ": ") + message),
          field_{std::move(field)} {}
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class ProblemKind { trace, mlp, quadratic };

struct ProblemSpec {
    ProblemKind kind = ProblemKind::mlp;
    std::size_t n = 10;      // trace / quadratic matrix side
    std::size_t N = 200;     // trace sensing matrices
    std::size_t rank = 2;    // planted trace solution rank
    double label_noise = 0.0;
    std::size_t input_dim = 100;
    std::size_t hidden = 100;
    std::size_t batch_size = 128;
    std::size_t eval_batch = 1024;
};

struct OptimSpec {
    OptimizerKind kind = OptimizerKind::sgdm;
    StepConfig step;
};

struct RunSpec {
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    std::size_t record_every = 10;
    std::size_t mc_bias_every = 0;  // 0 disables along-trajectory bias estimates
    std::size_t mc_samples = 256;
    std::string out_dir = "out";
};

struct ExperimentConfig {
    ProblemSpec problem;
    OptimSpec optim;
    NoiseModel noise;
    RunSpec run;
};

// ------------------------------------------------------------ enum text ----

inline std::string to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::trace: return "trace";
        case ProblemKind::mlp: return "mlp";
        case ProblemKind::quadratic: return "quadratic";
    }
    return "?";
}
inline std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::sgdm: return "sgdm";
        case OptimizerKind::adam: return "adam";
    }
    return "?";
}
inline std::string to_string(ClipKind k) {
    switch (k) {
        case ClipKind::none: return "none";
        case ClipKind::norm: return "norm";
        case ClipKind::spectral_exact: return "spectral";
        case ClipKind::spectral_truncated: return "spectral_truncated";
    }
    return "?";
}
inline std::string to_string(ThresholdMode k) {
    switch (k) {
        case ThresholdMode::disabled: return "disabled";
        case ThresholdMode::constant: return "constant";
        case ThresholdMode::ema: return "ema";
        case ThresholdMode::quantile: return "quantile";
    }
    return "?";
}
inline std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::pareto_rank_one: return "pareto";
        case NoiseKind::gaussian: return "gaussian";
    }
    return "?";
}

/// Shortest decimal that round-trips; "inf", "-inf", "nan" for non-finite.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline bool parse_double(std::string_view text, double& out) {
    if (text == "inf" || text == "+inf") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    if (text == "-inf") {
        out = -std::numeric_limits<double>::infinity();
        return true;
    }
    if (text == "nan") {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

class ConfigReader {
public:
    explicit ConfigReader(std::map<std::string, std::string> values) : values_{std::move(values)} {}

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

    void real(const std::string& key, double& out) {
        if (auto v = take(key)) {
            if (!parse_double(*v, out)) throw ConfigError(key, "expected a number, got '" + *v + "'");
        }
    }
    void count(const std::string& key, std::size_t& out) {
        if (auto v = take(key)) {
            std::uint64_t tmp = 0;
            auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), tmp);
            if (ec != std::errc{} || ptr != v->data() + v->size()) {
                throw ConfigError(key, "expected a non-negative integer, got '" + *v + "'");
            }
            out = static_cast<std::size_t>(tmp);
        }
    }
    void seed(const std::string& key, std::uint64_t& out) {
        std::size_t tmp = out;
        count(key, tmp);
        out = tmp;
    }
    void text(const std::string& key, std::string& out) {
        if (auto v = take(key)) out = *v;
    }
    template <class Enum>
    void choice(const std::string& key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> options) {
        auto v = take(key);
        if (!v) return;
        std::string allowed;
        for (const auto& [name, value] : options) {
            if (*v == name) {
                out = value;
                return;
            }
            allowed += allowed.empty() ? name : std::string("|") + name;
        }
        throw ConfigError(key, "expected one of " + allowed + ", got '" + *v + "'");
    }

    void reject_leftovers() const {
        if (!values_.empty()) throw ConfigError(values_.begin()->first, "unknown key");
    }

private:
    std::optional<std::string> take(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        std::string v = it->second;
        values_.erase(it);
        return v;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    const auto& p = c.problem;
    if (p.n < 1) throw ConfigError("problem.n", "must be >= 1");
    if (p.N < 1) throw ConfigError("problem.N", "must be >= 1");
    if (p.kind == ProblemKind::trace && (p.rank < 1 || p.rank > p.n)) {
        throw ConfigError("problem.rank", "must lie in [1, problem.n]");
    }
    if (p.input_dim < 3) throw ConfigError("problem.input_dim", "must be >= 3");
    if (p.hidden < 1) throw ConfigError("problem.hidden", "must be >= 1");
    if (p.batch_size < 1) throw ConfigError("problem.batch_size", "must be >= 1");
    if (p.eval_batch < 1) throw ConfigError("problem.eval_batch", "must be >= 1");
    if (!(p.label_noise >= 0.0)) throw ConfigError("problem.label_noise", "must be >= 0");

    const auto& s = c.optim.step;
    if (!(s.eta > 0.0) || !std::isfinite(s.eta)) throw ConfigError("optim.eta", "must be positive");
    if (!(s.beta >= 0.0 && s.beta < 1.0)) throw ConfigError("optim.beta", "must lie in [0, 1)");
    if (!(s.adam_beta2 >= 0.0 && s.adam_beta2 < 1.0)) throw ConfigError("optim.beta2", "must lie in [0, 1)");
    if (!(s.adam_eps > 0.0)) throw ConfigError("optim.eps", "must be positive");
    if (s.clip.rank < 1) throw ConfigError("optim.rank", "must be >= 1");
    const auto& t = s.threshold;
    if (t.mode == ThresholdMode::constant && !(t.tau > 0.0)) throw ConfigError("optim.tau", "must be positive");
    if (!(t.theta >= 0.0 && t.theta < 1.0)) throw ConfigError("optim.theta", "must lie in [0, 1)");
    if (!(t.q > 0.0 && t.q <= 1.0)) throw ConfigError("optim.q", "must lie in (0, 1]");
    if (t.w < 1) throw ConfigError("optim.w", "must be >= 1");

    const auto& n = c.noise;
    if (!(n.prob >= 0.0 && n.prob <= 1.0)) throw ConfigError("noise.prob", "must lie in [0, 1]");
    if (!(n.alpha > 0.0)) throw ConfigError("noise.alpha", "must be positive");
    if (!(n.x_m > 0.0)) throw ConfigError("noise.xm", "must be positive");
    if (!(n.gaussian_std >= 0.0)) throw ConfigError("noise.std", "must be >= 0");

    if (c.run.steps < 1) throw ConfigError("run.steps", "must be >= 1");
    if (c.run.record_every < 1) throw ConfigError("run.record_every", "must be >= 1");
    if (c.run.mc_bias_every > 0 && c.problem.kind == ProblemKind::mlp) {
        throw ConfigError("run.mc_bias_every", "needs an exact gradient (trace or quadratic problem)");
    }
    if (c.run.mc_bias_every > 0 && c.run.mc_samples < 2) throw ConfigError("run.mc_samples", "must be >= 2");
}

inline ExperimentConfig parse_config(std::string_view text) {
    std::map<std::string, std::string> values;
    std::istringstream lines{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(lines, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("", "line " + std::to_string(line_no) + ": expected 'section.key = value'");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.find('.') == std::string::npos) throw ConfigError(key, "key must be of the form section.key");
        if (value.empty()) throw ConfigError(key, "missing value");
        if (!values.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    }

    ExperimentConfig c;
    detail::ConfigReader r(std::move(values));
    const bool explicit_threshold = r.has("optim.threshold");
    const bool has_tau = r.has("optim.tau");

    r.choice("problem.kind", c.problem.kind,
             {{"trace", ProblemKind::trace}, {"mlp", ProblemKind::mlp}, {"quadratic", ProblemKind::quadratic}});
    r.count("problem.n", c.problem.n);
    r.count("problem.N", c.problem.N);
    r.count("problem.rank", c.problem.rank);
    r.real("problem.label_noise", c.problem.label_noise);
    r.count("problem.input_dim", c.problem.input_dim);
    r.count("problem.hidden", c.problem.hidden);
    r.count("problem.batch_size", c.problem.batch_size);
    r.count("problem.eval_batch", c.problem.eval_batch);

    auto& s = c.optim.step;
    r.choice("optim.kind", c.optim.kind,
             {{"sgd", OptimizerKind::sgd}, {"sgdm", OptimizerKind::sgdm}, {"adam", OptimizerKind::adam}});
    r.real("optim.eta", s.eta);
    r.real("optim.beta", s.beta);
    r.real("optim.beta2", s.adam_beta2);
    r.real("optim.eps", s.adam_eps);
    r.choice("optim.clip", s.clip.kind,
             {{"none", ClipKind::none},
              {"norm", ClipKind::norm},
              {"spectral", ClipKind::spectral_exact},
              {"spectral_truncated", ClipKind::spectral_truncated}});
    r.choice("optim.threshold", s.threshold.mode,
             {{"disabled", ThresholdMode::disabled},
              {"constant", ThresholdMode::constant},
              {"ema", ThresholdMode::ema},
              {"quantile", ThresholdMode::quantile}});
    r.real("optim.tau", s.threshold.tau);
    r.real("optim.theta", s.threshold.theta);
    r.real("optim.q", s.threshold.q);
    r.count("optim.w", s.threshold.w);
    r.count("optim.rank", s.clip.rank);
    r.count("optim.power_iters", s.clip.power_iters);
    r.count("optim.oversample", s.clip.oversample);
    if (!explicit_threshold && has_tau) s.threshold.mode = ThresholdMode::constant;

    r.choice("noise.kind", c.noise.kind,
             {{"none", NoiseKind::none}, {"pareto", NoiseKind::pareto_rank_one}, {"gaussian", NoiseKind::gaussian}});
    r.real("noise.prob", c.noise.prob);
    r.real("noise.alpha", c.noise.alpha);
    r.real("noise.xm", c.noise.x_m);
    r.real("noise.std", c.noise.gaussian_std);

    r.count("run.steps", c.run.steps);
    r.seed("run.seed", c.run.seed);
    r.count("run.record_every", c.run.record_every);
    r.count("run.mc_bias_every", c.run.mc_bias_every);
    r.count("run.mc_samples", c.run.mc_samples);
    r.text("run.out_dir", c.run.out_dir);

    r.reject_leftovers();
    validate(c);
    return c;
}

/// Every key, in the documented order; parse_config(format_config(c)) == c.
inline std::string format_config(const ExperimentConfig& c) {
    std::ostringstream o;
    const auto& s = c.optim.step;
    o << "problem.kind = " << to_string(c.problem.kind) << '\n'
      << "problem.n = " << c.problem.n << '\n'
      << "problem.N = " << c.problem.N << '\n'
      << "problem.rank = " << c.problem.rank << '\n'
      << "problem.label_noise = " << format_double(c.problem.label_noise) << '\n'
      << "problem.input_dim = " << c.problem.input_dim << '\n'
      << "problem.hidden = " << c.problem.hidden << '\n'
      << "problem.batch_size = " << c.problem.batch_size << '\n'
      << "problem.eval_batch = " << c.problem.eval_batch << '\n'
      << "optim.kind = " << to_string(c.optim.kind) << '\n'
      << "optim.eta = " << format_double(s.eta) << '\n'
      << "optim.beta = " << format_double(s.beta) << '\n'
      << "optim.beta2 = " << format_double(s.adam_beta2) << '\n'
      << "optim.eps = " << format_double(s.adam_eps) << '\n'
      << "optim.clip = " << to_string(s.clip.kind) << '\n'
      << "optim.threshold = " << to_string(s.threshold.mode) << '\n'
      << "optim.tau = " << format_double(s.threshold.tau) << '\n'
      << "optim.theta = " << format_double(s.threshold.theta) << '\n'
      << "optim.q = " << format_double(s.threshold.q) << '\n'
      << "optim.w = " << s.threshold.w << '\n'
      << "optim.rank = " << s.clip.rank << '\n'
      << "optim.power_iters = " << s.clip.power_iters << '\n'
      << "optim.oversample = " << s.clip.oversample << '\n'
      << "noise.kind = " << to_string(c.noise.kind) << '\n'
      << "noise.prob = " << format_double(c.noise.prob) << '\n'
      << "noise.alpha = " << format_double(c.noise.alpha) << '\n'
      << "noise.xm = " << format_double(c.noise.x_m) << '\n'
      << "noise.std = " << format_double(c.noise.gaussian_std) << '\n'
      << "run.steps = " << c.run.steps << '\n'
      << "run.seed = " << c.run.seed << '\n'
      << "run.record_every = " << c.run.record_every << '\n'
      << "run.mc_bias_every = " << c.run.mc_bias_every << '\n'
      << "run.mc_samples = " << c.run.mc_samples << '\n'
      << "run.out_dir = " << c.run.out_dir << '\n';
    return o.str();
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

}  // namespace specclip
