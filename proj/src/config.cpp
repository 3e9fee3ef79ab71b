#include "riskctl/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace riskctl {

using json = nlohmann::json;

ConfigError::ConfigError(const std::string& message, std::size_t line, std::size_t column)
    : Error(line > 0 ? "config:" + std::to_string(line) + ":" + std::to_string(column) + ": " + message
                     : "config: " + message),
      line_(line),
      column_(column) {}

namespace {

// Input iterator that publishes how far the JSON lexer has read.
struct TrackedIter {
    using iterator_category = std::input_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    const char* p = nullptr;
    const char** cursor = nullptr;

    reference operator*() const { return *p; }
    TrackedIter& operator++() {
        ++p;
        *cursor = p;
        return *this;
    }
    TrackedIter operator++(int) {
        auto old = *this;
        ++*this;
        return old;
    }
    bool operator==(const TrackedIter& o) const { return p == o.p; }
    bool operator!=(const TrackedIter& o) const { return p != o.p; }
};

struct SourcePos {
    std::size_t line = 0;
    std::size_t column = 0;
};

SourcePos position_of(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    SourcePos pos{1, 1};
    for (std::size_t i = 0; i < offset; ++i) {
        if (text[i] == '\n') {
            ++pos.line;
            pos.column = 1;
        } else {
            ++pos.column;
        }
    }
    return pos;
}

std::string escape_pointer_token(const std::string& key) {
    std::string out;
    for (char ch : key) {
        if (ch == '~') out += "~0";
        else if (ch == '/') out += "~1";
        else out += ch;
    }
    return out;
}

// Builds the DOM while remembering where each object key starts.
class LocatingParser {
public:
    LocatingParser(std::string_view text, json& root, const char** cursor)
        : text_(text), dom_(root, false), cursor_(cursor) {}

    bool null() { return value(dom_.null()); }
    bool boolean(bool v) { return value(dom_.boolean(v)); }
    bool number_integer(json::number_integer_t v) { return value(dom_.number_integer(v)); }
    bool number_unsigned(json::number_unsigned_t v) { return value(dom_.number_unsigned(v)); }
    bool number_float(json::number_float_t v, const json::string_t& s) { return value(dom_.number_float(v, s)); }
    bool string(json::string_t& v) { return value(dom_.string(v)); }
    bool binary(json::binary_t& v) { return value(dom_.binary(v)); }

    bool start_object(std::size_t n) {
        frames_.push_back({child_pointer(), false, 0, {}, {}});
        return dom_.start_object(n);
    }
    bool end_object() {
        frames_.pop_back();
        return value(dom_.end_object());
    }
    bool start_array(std::size_t n) {
        frames_.push_back({child_pointer(), true, 0, {}, {}});
        return dom_.start_array(n);
    }
    bool end_array() {
        frames_.pop_back();
        return value(dom_.end_array());
    }

    bool key(json::string_t& k) {
        auto& f = frames_.back();
        const std::size_t end = static_cast<std::size_t>(*cursor_ - text_.data());
        std::size_t start = end >= 2 ? end - 2 : 0;
        while (start > 0 && !(text_[start] == '"' && text_[start - 1] != '\\')) --start;
        if (!f.keys.insert(k).second) {
            error_ = "duplicate key '" + k + "'";
            error_offset_ = start;
            return false;
        }
        f.last_key = k;
        key_offsets_[f.pointer + "/" + escape_pointer_token(k)] = start;
        return dom_.key(k);
    }

    bool parse_error(std::size_t position, const std::string&, const nlohmann::detail::exception& ex) {
        error_ = ex.what();
        // Strip the library prefix "[json.exception.parse_error.101] parse error at line x, column y: ".
        if (auto colon = error_.find(": "); colon != std::string::npos) error_ = error_.substr(colon + 2);
        error_offset_ = position > 0 ? position - 1 : 0;
        return false;
    }

    const std::string& error() const { return error_; }
    std::size_t error_offset() const { return error_offset_; }
    const std::map<std::string, std::size_t>& key_offsets() const { return key_offsets_; }

private:
    struct Frame {
        std::string pointer;
        bool is_array;
        std::size_t index;
        std::set<std::string> keys;
        std::string last_key;
    };

    std::string child_pointer() const {
        if (frames_.empty()) return "";
        const auto& f = frames_.back();
        if (f.is_array) return f.pointer + "/" + std::to_string(f.index);
        return f.pointer + "/" + escape_pointer_token(f.last_key);
    }

    bool value(bool ok) {
        if (!frames_.empty() && frames_.back().is_array) ++frames_.back().index;
        return ok;
    }

    std::string_view text_;
    nlohmann::detail::json_sax_dom_parser<json> dom_;
    const char** cursor_;
    std::vector<Frame> frames_;
    std::map<std::string, std::size_t> key_offsets_;
    std::string error_;
    std::size_t error_offset_ = 0;
};

class Reader {
public:
    Reader(std::string_view text, std::map<std::string, std::size_t> offsets)
        : text_(text), offsets_(std::move(offsets)) {}

    [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
        std::string p = pointer;
        for (;;) {
            if (auto it = offsets_.find(p); it != offsets_.end()) {
                const auto pos = position_of(text_, it->second);
                throw ConfigError(message + " (" + (pointer.empty() ? "/" : pointer) + ")", pos.line, pos.column);
            }
            const auto slash = p.rfind('/');
            if (slash == std::string::npos || p.empty()) break;
            p.erase(slash);
        }
        throw ConfigError(message + " (" + (pointer.empty() ? "/" : pointer) + ")", 1, 1);
    }

    void expect_object(const json& j, const std::string& ptr, std::initializer_list<std::string_view> allowed) const {
        if (!j.is_object()) fail(ptr, "expected an object");
        for (const auto& [k, v] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
                fail(ptr + "/" + escape_pointer_token(k), "unknown key '" + k + "'");
        }
    }

    double number(const json& j, const std::string& ptr) const {
        if (!j.is_number()) fail(ptr, "expected a number");
        const double v = j.get<double>();
        if (!std::isfinite(v)) fail(ptr, "expected a finite number");
        return v;
    }

    double positive(const json& j, const std::string& ptr) const {
        const double v = number(j, ptr);
        if (!(v > 0.0)) fail(ptr, "must be positive");
        return v;
    }

    std::uint64_t unsigned_integer(const json& j, const std::string& ptr) const {
        if (j.is_number_unsigned()) return j.get<std::uint64_t>();
        if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
        fail(ptr, "expected a non-negative integer");
    }

    std::string string(const json& j, const std::string& ptr) const {
        if (!j.is_string()) fail(ptr, "expected a string");
        return j.get<std::string>();
    }

    std::vector<double> numbers(const json& j, const std::string& ptr) const {
        if (!j.is_array()) fail(ptr, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], ptr + "/" + std::to_string(i)));
        return out;
    }

private:
    std::string_view text_;
    std::map<std::string, std::size_t> offsets_;
};

template <class F>
void with(const json& obj, const char* key, F&& f) {
    if (auto it = obj.find(key); it != obj.end()) f(*it, std::string("/") + key);
}

ModelSpec read_model(const Reader& r, const json& j, const std::string& ptr) {
    if (!j.is_object()) r.fail(ptr, "expected an object");
    auto preset_it = j.find("preset");
    if (preset_it == j.end()) r.fail(ptr, "missing key 'preset'");
    const std::string preset = r.string(*preset_it, ptr + "/preset");
    const auto sub = [&](const char* k) { return ptr + "/" + k; };
    try {
        if (preset == "ou_quadratic") {
            r.expect_object(j, ptr, {"preset", "gamma", "mu", "sigma", "c", "K"});
            OuQuadratic p;
            if (j.contains("gamma")) p.gamma = r.number(j["gamma"], sub("gamma"));
            if (j.contains("mu")) p.mu = r.number(j["mu"], sub("mu"));
            if (j.contains("sigma")) p.sigma = r.number(j["sigma"], sub("sigma"));
            if (j.contains("c")) p.c = r.number(j["c"], sub("c"));
            if (j.contains("K")) p.K = r.number(j["K"], sub("K"));
            return ModelSpec::ou_quadratic(p);
        }
        if (preset == "bm_quadratic") {
            r.expect_object(j, ptr, {"preset", "sigma", "c", "K"});
            BmQuadratic p;
            if (j.contains("sigma")) p.sigma = r.number(j["sigma"], sub("sigma"));
            if (j.contains("c")) p.c = r.number(j["c"], sub("c"));
            if (j.contains("K")) p.K = r.number(j["K"], sub("K"));
            return ModelSpec::bm_quadratic(p);
        }
        if (preset == "custom_poly") {
            r.expect_object(j, ptr,
                            {"preset", "drift", "volatility", "running_cost", "push_cost_up", "push_cost_down",
                             "sigma2_bound", "push_cost_bound"});
            for (const char* k : {"drift", "volatility", "running_cost", "push_cost_up", "push_cost_down",
                                  "sigma2_bound", "push_cost_bound"})
                if (!j.contains(k)) r.fail(ptr, std::string("missing key '") + k + "'");
            CustomPoly p;
            p.drift.coeffs = r.numbers(j["drift"], sub("drift"));
            p.volatility.coeffs = r.numbers(j["volatility"], sub("volatility"));
            p.running_cost.coeffs = r.numbers(j["running_cost"], sub("running_cost"));
            p.push_cost_up.coeffs = r.numbers(j["push_cost_up"], sub("push_cost_up"));
            p.push_cost_down.coeffs = r.numbers(j["push_cost_down"], sub("push_cost_down"));
            return ModelSpec::custom_poly(std::move(p), r.positive(j["sigma2_bound"], sub("sigma2_bound")),
                                          r.positive(j["push_cost_bound"], sub("push_cost_bound")));
        }
    } catch (const ArgumentError& e) {
        r.fail(ptr, e.what());
    }
    r.fail(ptr + "/preset", "unknown preset '" + preset + "'");
}

json model_to_json(const ModelSpec& m) {
    struct Visitor {
        const ModelSpec& m;
        json operator()(const OuQuadratic& p) const {
            return {{"preset", "ou_quadratic"}, {"gamma", p.gamma}, {"mu", p.mu},
                    {"sigma", p.sigma},         {"c", p.c},         {"K", p.K}};
        }
        json operator()(const BmQuadratic& p) const {
            return {{"preset", "bm_quadratic"}, {"sigma", p.sigma}, {"c", p.c}, {"K", p.K}};
        }
        json operator()(const CustomPoly& p) const {
            return {{"preset", "custom_poly"},
                    {"drift", p.drift.coeffs},
                    {"volatility", p.volatility.coeffs},
                    {"running_cost", p.running_cost.coeffs},
                    {"push_cost_up", p.push_cost_up.coeffs},
                    {"push_cost_down", p.push_cost_down.coeffs},
                    {"sigma2_bound", m.sigma2_bound()},
                    {"push_cost_bound", m.push_cost_bound()}};
        }
    };
    return std::visit(Visitor{m}, m.form());
}

}  // namespace

RunConfig parse_config(std::string_view text) {
    json root;
    const char* cursor = text.data();
    LocatingParser handler(text, root, &cursor);
    const TrackedIter first{text.data(), &cursor};
    const TrackedIter last{text.data() + text.size(), &cursor};
    if (!json::sax_parse(first, last, &handler)) {
        const auto pos = position_of(text, handler.error_offset());
        throw ConfigError(handler.error(), pos.line, pos.column);
    }
    const Reader r(text, handler.key_offsets());
    r.expect_object(root, "",
                    {"command", "model", "theta", "thetas", "solver", "verify", "simulation", "probe", "output_dir",
                     "threads"});

    RunConfig cfg;
    with(root, "command", [&](const json& j, const std::string& p) {
        cfg.command = r.string(j, p);
        if (std::find(std::begin(kCommands), std::end(kCommands), cfg.command) == std::end(kCommands))
            r.fail(p, "unknown command '" + cfg.command + "'");
    });
    if (!root.contains("model")) throw ConfigError("missing key 'model'", 1, 1);
    cfg.model = read_model(r, root["model"], "/model");
    with(root, "theta", [&](const json& j, const std::string& p) { cfg.theta = r.positive(j, p); });
    with(root, "thetas", [&](const json& j, const std::string& p) {
        cfg.thetas = r.numbers(j, p);
        for (std::size_t i = 0; i < cfg.thetas.size(); ++i) {
            if (!(cfg.thetas[i] > 0.0)) r.fail(p, "thetas must be positive");
            if (i > 0 && !(cfg.thetas[i] > cfg.thetas[i - 1])) r.fail(p, "thetas must be strictly increasing");
        }
    });
    with(root, "solver", [&](const json& j, const std::string& p) {
        r.expect_object(j, p, {"grid_size", "eigen_rtol", "root_tol"});
        auto& s = cfg.solver;
        with(j, "grid_size", [&](const json& v, const std::string& q) {
            s.grid_size = r.unsigned_integer(v, p + q);
            if (s.grid_size < 11) r.fail(p + q, "grid_size must be at least 11");
        });
        with(j, "eigen_rtol", [&](const json& v, const std::string& q) { s.eigen_rtol = r.positive(v, p + q); });
        with(j, "root_tol", [&](const json& v, const std::string& q) { s.root_tol = r.positive(v, p + q); });
    });
    with(root, "verify", [&](const json& j, const std::string& p) {
        r.expect_object(j, p, {"probe_points", "extent", "tolerance", "boundary_offset"});
        auto& s = cfg.verify;
        with(j, "probe_points", [&](const json& v, const std::string& q) {
            s.probe_points = r.unsigned_integer(v, p + q);
            if (s.probe_points < 2) r.fail(p + q, "probe_points must be at least 2");
        });
        with(j, "extent", [&](const json& v, const std::string& q) { s.extent = r.positive(v, p + q); });
        with(j, "tolerance", [&](const json& v, const std::string& q) { s.tolerance = r.positive(v, p + q); });
        with(j, "boundary_offset",
             [&](const json& v, const std::string& q) { s.boundary_offset = r.number(v, p + q); });
    });
    with(root, "simulation", [&](const json& j, const std::string& p) {
        r.expect_object(j, p,
                        {"x0", "horizon", "dt", "n_paths", "seed", "burn_in", "checkpoint_every", "alpha", "beta"});
        auto& s = cfg.simulation;
        with(j, "x0", [&](const json& v, const std::string& q) { s.x0 = r.number(v, p + q); });
        with(j, "horizon", [&](const json& v, const std::string& q) { s.horizon = r.positive(v, p + q); });
        with(j, "dt", [&](const json& v, const std::string& q) { s.dt = r.positive(v, p + q); });
        with(j, "n_paths", [&](const json& v, const std::string& q) {
            s.n_paths = r.unsigned_integer(v, p + q);
            if (s.n_paths < 1) r.fail(p + q, "n_paths must be at least 1");
        });
        with(j, "seed", [&](const json& v, const std::string& q) { s.seed = r.unsigned_integer(v, p + q); });
        with(j, "burn_in", [&](const json& v, const std::string& q) {
            s.burn_in = r.number(v, p + q);
            if (s.burn_in < 0.0) r.fail(p + q, "burn_in must be non-negative");
        });
        with(j, "checkpoint_every", [&](const json& v, const std::string& q) {
            s.checkpoint_every = r.number(v, p + q);
            if (s.checkpoint_every < 0.0) r.fail(p + q, "checkpoint_every must be non-negative");
        });
        with(j, "alpha", [&](const json& v, const std::string& q) {
            if (!v.is_null()) s.alpha = r.number(v, p + q);
        });
        with(j, "beta", [&](const json& v, const std::string& q) {
            if (!v.is_null()) s.beta = r.number(v, p + q);
        });
        if (s.horizon < s.dt) r.fail(p + "/horizon", "horizon must be at least dt");
        if (s.burn_in >= s.horizon) r.fail(p + "/burn_in", "burn_in must be shorter than the horizon");
        if (s.alpha && s.beta && !(*s.alpha < *s.beta)) r.fail(p + "/beta", "beta must exceed alpha");
    });
    with(root, "probe", [&](const json& j, const std::string& p) {
        r.expect_object(j, p, {"offsets"});
        with(j, "offsets", [&](const json& v, const std::string& q) {
            if (!v.is_array()) r.fail(p + q, "expected an array of [d_alpha, d_beta] pairs");
            cfg.probe.offsets.clear();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const auto ptr = p + q + "/" + std::to_string(i);
                const auto pair = r.numbers(v[i], ptr);
                if (pair.size() != 2) r.fail(ptr, "expected [d_alpha, d_beta]");
                cfg.probe.offsets.emplace_back(pair[0], pair[1]);
            }
        });
    });
    with(root, "output_dir", [&](const json& j, const std::string& p) {
        cfg.output_dir = r.string(j, p);
        if (cfg.output_dir.empty()) r.fail(p, "output_dir must not be empty");
    });
    with(root, "threads", [&](const json& j, const std::string& p) {
        const auto t = r.unsigned_integer(j, p);
        if (t > 4096) r.fail(p, "threads must be at most 4096");
        cfg.threads = static_cast<unsigned>(t);
    });
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path.string(), 0, 0);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json sim = {{"x0", cfg.simulation.x0},
                {"horizon", cfg.simulation.horizon},
                {"dt", cfg.simulation.dt},
                {"n_paths", cfg.simulation.n_paths},
                {"seed", cfg.simulation.seed},
                {"burn_in", cfg.simulation.burn_in},
                {"checkpoint_every", cfg.simulation.checkpoint_every}};
    if (cfg.simulation.alpha) sim["alpha"] = *cfg.simulation.alpha;
    if (cfg.simulation.beta) sim["beta"] = *cfg.simulation.beta;
    json offsets = json::array();
    for (const auto& [a, b] : cfg.probe.offsets) offsets.push_back({a, b});
    const json root = {
        {"command", cfg.command},
        {"model", model_to_json(cfg.model)},
        {"theta", cfg.theta},
        {"thetas", cfg.thetas},
        {"solver",
         {{"grid_size", cfg.solver.grid_size}, {"eigen_rtol", cfg.solver.eigen_rtol}, {"root_tol", cfg.solver.root_tol}}},
        {"verify",
         {{"probe_points", cfg.verify.probe_points},
          {"extent", cfg.verify.extent},
          {"tolerance", cfg.verify.tolerance},
          {"boundary_offset", cfg.verify.boundary_offset}}},
        {"simulation", sim},
        {"probe", {{"offsets", offsets}}},
        {"output_dir", cfg.output_dir},
        {"threads", cfg.threads}};
    return root.dump(2) + "\n";
}

}  // namespace riskctl
