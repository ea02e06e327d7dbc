#include "sign/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "sign/data.hpp"
#include "sign/error.hpp"
#include "sign/trainer.hpp"

namespace sign {

namespace {

enum class Type { text, real, integer, boolean, sizes, choice };

struct Entry {
    const char* key;
    const char* value;
    Type type;
    std::vector<std::string> choices = {};
    bool trajectory = true;  // part of training_hash
};

const std::vector<Entry>& registry() {
    static const std::vector<Entry> r = {
        {"seed", "0", Type::integer},
        {"data.kind", "gaussian_mixture", Type::choice,
         {"gaussian_mixture", "two_moons", "checkerboard2d", "rings", "toy_images", "idx_images"}},
        {"data.count", "20000", Type::integer},
        {"data.normalize", "true", Type::boolean},
        {"data.mixture", kDefaultMixture, Type::text},
        {"data.jitter", "0.05", Type::real},
        {"data.image_size", "8", Type::integer},
        {"data.templates", "8", Type::integer},
        {"data.pixel_noise", "0.05", Type::real},
        {"data.images", "", Type::text},
        {"data.labels", "", Type::text},
        {"schedule.kind", "identity", Type::choice, {"identity", "linear"}},
        {"schedule.sigma_min", "0.002", Type::real},
        {"schedule.sigma_max", "1", Type::real},
        {"schedule.eps", "0.002", Type::real},
        {"schedule.T", "1", Type::real},
        {"schedule.N", "18", Type::integer},
        {"schedule.rho", "7", Type::real},
        {"score.kind", "analytic", Type::choice, {"analytic", "kernel", "learned", "zero"}},
        {"score.sigma_data", "1", Type::real},
        {"score.checkpoint", "", Type::text},
        {"score.hidden", "128,128", Type::sizes},
        {"score.steps", "5000", Type::integer},
        {"score.lr", "0.001", Type::real},
        {"score.batch", "256", Type::integer},
        {"kernel.sigma_floor", "0", Type::real},
        {"model.hidden", "128,128,128", Type::sizes},
        {"model.activation", "silu", Type::choice, {"silu", "tanh"}},
        {"model.identity_init", "true", Type::boolean},
        {"model.checkpoint", "", Type::text},
        {"loss.lambda_f", "1", Type::real},
        {"loss.lambda_d", "0", Type::real},
        {"loss.lambda_r", "0", Type::real},
        {"loss.lambda_n", "0", Type::real},
        {"loss.lambda_t", "1", Type::real},
        {"loss.lambda_i", "1", Type::real},
        {"loss.distance", "sq_l2", Type::choice, {"sq_l2", "l2"}},
        {"loss.idem_order", "eq4", Type::choice, {"eq4", "alg1"}},
        {"loss.tight_clamp", "0", Type::real},
        {"loss.auto_balance", "false", Type::boolean},
        {"train.mode", "sign", Type::choice, {"sign", "ign"}},
        {"train.steps", "20000", Type::integer, {}, false},
        {"train.batch", "256", Type::integer},
        {"train.lr", "0.0005", Type::real},
        {"train.beta1", "0.9", Type::real},
        {"train.beta2", "0.999", Type::real},
        {"train.lr_decay", "cosine", Type::choice, {"cosine", "none"}},
        {"train.freeze", "copy", Type::choice, {"copy", "ema"}},
        {"train.ema_decay", "0.999", Type::real},
        {"train.grad_clip", "100", Type::real},
        {"train.checkpoint_every", "0", Type::integer, {}, false},
        {"train.resume", "", Type::text, {}, false},
        {"train.flow_stepper", "euler", Type::choice, {"euler", "heun"}},
        {"train.log_every", "1", Type::integer, {}, false},
        {"dmd.enabled", "false", Type::boolean},
        {"dmd.score_steps", "5", Type::integer},
        {"dmd.score_lr", "0.001", Type::real},
        {"dmd.score_hidden", "128,128", Type::sizes},
        {"reg.pair_count", "4096", Type::integer},
        {"reg.pairs_file", "", Type::text},
        {"sample.count", "1000", Type::integer, {}, false},
        {"sample.mode", "single", Type::choice, {"single", "recursive", "multistep"}, false},
        {"sample.max_iters", "10", Type::integer, {}, false},
        {"sample.tol", "0.0001", Type::real, {}, false},
        {"sample.format", "auto", Type::choice, {"auto", "csv", "pgm"}, false},
        {"edit.input", "", Type::text, {}, false},
        {"edit.mask", "checkerboard", Type::text, {}, false},
        {"edit.cell", "2", Type::integer, {}, false},
        {"edit.fill", "zero", Type::choice, {"zero", "noise", "keep"}, false},
        {"edit.steps", "10", Type::integer, {}, false},
        {"edit.sigma_hi", "0", Type::real, {}, false},
        {"edit.sigma_lo", "0", Type::real, {}, false},
        {"edit.count", "64", Type::integer, {}, false},
        {"eval.count", "10000", Type::integer, {}, false},
        {"eval.projections", "128", Type::integer, {}, false},
        {"eval.repeats", "5", Type::integer, {}, false},
        {"trace.count", "8", Type::integer, {}, false},
        {"trace.stepper", "euler", Type::choice, {"euler", "heun"}, false},
        {"study.N", "8,16,32", Type::sizes, {}, false},
        {"study.stepper", "euler", Type::choice, {"euler", "heun"}, false},
        {"study.flow_tol", "0.0001", Type::real, {}, false},
        {"study.max_steps", "20000", Type::integer, {}, false},
        {"study.check_every", "1000", Type::integer, {}, false},
        {"study.trajectories", "256", Type::integer, {}, false},
        {"study.reference_steps", "10000", Type::integer, {}, false},
    };
    return r;
}

const Entry& entry(const std::string& key) {
    for (const auto& e : registry()) {
        if (key == e.key) return e;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        out = false;
        return true;
    }
    return false;
}

bool parse_real(const std::string& v, double& out) {
    if (v.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(v.c_str(), &end);
    return *end == '\0' && errno != ERANGE && std::isfinite(out);
}

bool parse_integer(const std::string& v, std::uint64_t& out) {
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    errno = 0;
    out = std::strtoull(v.c_str(), nullptr, 10);
    return errno != ERANGE;
}

bool parse_sizes(const std::string& v, std::vector<std::size_t>& out) {
    out.clear();
    if (v.empty()) return true;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::uint64_t n = 0;
        if (!parse_integer(trim(item), n) || n == 0) return false;
        out.push_back(n);
    }
    return true;
}

void validate(const Entry& e, const std::string& value) {
    bool ok = true;
    switch (e.type) {
        case Type::text: break;
        case Type::real: {
            double d;
            ok = parse_real(value, d);
            break;
        }
        case Type::integer: {
            std::uint64_t n;
            ok = parse_integer(value, n);
            break;
        }
        case Type::boolean: {
            bool b;
            ok = parse_bool(value, b);
            break;
        }
        case Type::sizes: {
            std::vector<std::size_t> v;
            ok = parse_sizes(value, v);
            break;
        }
        case Type::choice: ok = std::find(e.choices.begin(), e.choices.end(), value) != e.choices.end(); break;
    }
    if (!ok) throw ConfigError("invalid value '" + value + "' for config key '" + e.key + "'");
}

}  // namespace

Config::Config() {
    for (const auto& e : registry()) values_[e.key] = e.value;
}

const std::vector<std::string>& Config::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& e : registry()) out.emplace_back(e.key);
        return out;
    }();
    return k;
}

Config Config::parse(const std::string& text) {
    Config c;
    c.merge_text(text);
    return c;
}

Config Config::load(const std::string& path) { return parse(read_text(path)); }

void Config::merge_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value'");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void Config::set(const std::string& key, const std::string& value) {
    const Entry& e = entry(key);
    const std::string v = trim(value);
    validate(e, v);
    values_[key] = v;
}

void Config::assign(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& Config::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double Config::real(const std::string& key) const {
    double d = 0.0;
    if (!parse_real(get(key), d)) throw ConfigError("config key '" + key + "' is not a number");
    return d;
}

std::uint64_t Config::integer(const std::string& key) const {
    std::uint64_t n = 0;
    if (!parse_integer(get(key), n)) throw ConfigError("config key '" + key + "' is not an integer");
    return n;
}

bool Config::flag(const std::string& key) const {
    bool b = false;
    if (!parse_bool(get(key), b)) throw ConfigError("config key '" + key + "' is not a boolean");
    return b;
}

std::vector<std::size_t> Config::sizes(const std::string& key) const {
    std::vector<std::size_t> v;
    if (!parse_sizes(get(key), v)) throw ConfigError("config key '" + key + "' is not a list of positive integers");
    return v;
}

std::string Config::resolved() const {
    std::string out;
    for (const auto& e : registry()) out += std::string(e.key) + " = " + values_.at(e.key) + "\n";
    return out;
}

std::uint64_t Config::training_hash() const {
    std::string text;
    for (const auto& e : registry()) {
        if (e.trajectory) text += std::string(e.key) + "=" + values_.at(e.key) + "\n";
    }
    return fnv1a(text);
}

}  // namespace sign
