#pragma once

// Run configuration: a JSON document with nested sections, parsed and fully
// validated before any command does real work.

#include "riserop/dataflow.hpp"
#include "riserop/deeponet.hpp"
#include "riserop/error.hpp"
#include "riserop/placement.hpp"
#include "riserop/synth.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace riserop::config {

using json = nlohmann::json;

/// Typed access to one JSON object that rejects unknown keys.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("'" + name() + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    T get(const std::string& key, const T& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return convert<T>(key);
    }

    template <class T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError("missing required key '" + qualified(key) + "'");
        return convert<T>(key);
    }

    template <class T>
    std::optional<T> optional(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) return std::nullopt;
        return convert<T>(key);
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, qualified(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string name() const { return path_.empty() ? "<root>" : path_; }

    template <class T>
    T convert(const std::string& key) const {
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("'" + qualified(key) + "' must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("'" + qualified(key) + "' must be an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<long long>() < 0) throw ConfigError("'" + qualified(key) + "' must be non-negative");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("'" + qualified(key) + "' must be a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("'" + qualified(key) + "' must be a string");
        }
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("'" + qualified(key) + "' has the wrong type");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Where a strain field comes from: a CSV file or the synthetic generator.
struct CaseSource {
    std::string file;                     ///< empty: synthesize
    std::optional<synth::Profile> profile;
    std::optional<double> velocity;       ///< overrides the profile's max velocity
    std::string label;
    bool pad_boundaries = false;
    std::vector<double> drop_depths_from_top;

    bool synthetic() const { return file.empty(); }
};

struct Seeds {
    std::uint64_t data = 0;
    std::uint64_t model = 0;
    std::uint64_t train = 0;
    std::uint64_t placement = 0;
};

struct TrainSettings {
    long iterations = 20000;
    double lr = 1e-3;
    long log_stride = 100;
    std::size_t batch_size = 0;
    std::size_t stride = 1;
};

struct TransferSettings {
    std::optional<CaseSource> target;
    long finetune = 0;
    double lr = 1e-3;
};

struct PodSettings {
    int points = 100;
    std::optional<RowRange> window;
    std::size_t stride = 1;
    bool remove_mean = false;
    int observers = 0; ///< 0: layout observer count
    int modes_out = 10;
};

struct PlacementSettings {
    placement::AlternationSchedule schedule{60, 40, 20000, 8};
    double initial_sigma = 0.05;
    double lr = 2e-3;
    std::size_t stride = 5;
    long record_every = 100;
};

struct ReportSettings {
    std::vector<double> locations; ///< empty: defaults chosen from the layout
    int heldout_points = 50;
};

struct RunConfig {
    Seeds seeds;
    std::string output;
    CaseSource source;
    synth::CaseOptions synth;
    std::optional<std::vector<double>> observers;
    std::optional<std::vector<double>> training;
    dataflow::WindowSpec windows;
    deeponet::ModelConfig model;
    TrainSettings train;
    TransferSettings transfer;
    PodSettings pod;
    PlacementSettings placement;
    ReportSettings report;
    std::string checkpoint;
};

namespace detail {

inline RowRange parse_range(const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw ConfigError("'" + key + "' must be a [begin, end) pair of integers");
    const long long b = v[0].get<long long>(), e = v[1].get<long long>();
    if (b < 0 || e <= b) throw ConfigError("'" + key + "' must satisfy 0 <= begin < end");
    return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

inline CaseSource parse_case(Section s) {
    CaseSource c;
    c.file = s.get<std::string>("file", "");
    if (auto p = s.optional<std::string>("profile")) {
        try {
            c.profile = synth::parse_profile(*p);
        } catch (const Error&) {
            throw ConfigError("'" + s.qualified("profile") + "' must be slow, medium or fast");
        }
    }
    c.velocity = s.optional<double>("velocity");
    c.label = s.get<std::string>("label", "");
    c.pad_boundaries = s.get<bool>("pad_boundaries", false);
    c.drop_depths_from_top = s.get<std::vector<double>>("drop_depths_from_top", {});
    s.finish();
    if (c.synthetic()) {
        if (!c.profile && !c.velocity) throw ConfigError("a case needs a file, profile or velocity");
        if (c.velocity && !(*c.velocity > 0.0)) throw ConfigError("case velocity must be positive");
        if (c.pad_boundaries || !c.drop_depths_from_top.empty())
            throw ConfigError("pad_boundaries and drop_depths_from_top apply to file cases only");
    } else {
        if (c.profile || c.velocity) throw ConfigError("a file case cannot also set profile or velocity");
        if (!std::filesystem::is_regular_file(c.file)) throw ConfigError("case file '" + c.file + "' does not exist");
    }
    if (c.label.empty())
        c.label = c.synthetic() ? (c.profile ? std::string(synth::to_string(*c.profile)) : "synthetic")
                                : std::filesystem::path(c.file).stem().string();
    return c;
}

inline std::uint64_t seed_value(Section& s, const std::string& key) {
    const auto v = s.require<long long>(key);
    if (v < 0) throw ConfigError("seed '" + s.qualified(key) + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
}

} // namespace detail

/// Parses a configuration document. `default_output` is used when the config
/// has no "output" (typically $RISEROP_OUT).
inline RunConfig parse_config(const json& root, const std::string& default_output = "") {
    Section top(root, "");
    RunConfig c;

    {
        Section s = top.child("seeds");
        if (!top.has("seeds")) throw ConfigError("missing required section 'seeds'");
        c.seeds.data = detail::seed_value(s, "data");
        c.seeds.model = detail::seed_value(s, "model");
        c.seeds.train = detail::seed_value(s, "train");
        c.seeds.placement = detail::seed_value(s, "placement");
        s.finish();
    }
    c.output = top.get<std::string>("output", default_output);
    c.checkpoint = top.get<std::string>("checkpoint", "");
    if (!top.has("case")) throw ConfigError("missing required section 'case'");
    c.source = detail::parse_case(top.child("case"));

    {
        Section s = top.child("riser");
        auto& r = c.synth.riser;
        r.length = s.get("length", r.length);
        r.bending_stiffness = s.get("bending_stiffness", r.bending_stiffness);
        r.tension = s.get("tension", r.tension);
        r.damping = s.get("damping", r.damping);
        r.n_modes = s.get("n_modes", r.n_modes);
        r.z_points = s.get("z_points", r.z_points);
        r.sample_rate = s.get("sample_rate", r.sample_rate);
        s.finish();
        r.validate();
    }
    {
        Section s = top.child("synth");
        c.synth.duration = s.get("duration", c.synth.duration);
        c.synth.noise_fraction = s.get("noise_fraction", c.synth.noise_fraction);
        c.synth.lift_coefficient = s.get("lift_coefficient", c.synth.lift_coefficient);
        s.finish();
        if (!(c.synth.duration > 0.0)) throw ConfigError("synth.duration must be positive");
        if (c.synth.noise_fraction < 0.0) throw ConfigError("synth.noise_fraction must be >= 0");
    }
    {
        Section s = top.child("layout");
        c.observers = s.optional<std::vector<double>>("observers");
        c.training = s.optional<std::vector<double>>("training");
        s.finish();
        if (c.observers && c.observers->empty()) throw ConfigError("layout.observers must not be empty");
        if (c.training && c.training->empty()) throw ConfigError("layout.training must not be empty");
    }
    {
        Section s = top.child("windows");
        const json& w = root.contains("windows") ? root.at("windows") : json::object();
        s.get<json>("train", json());
        s.get<json>("test", json());
        if (w.contains("train")) c.windows.train = detail::parse_range(w.at("train"), "windows.train");
        else if (!c.source.synthetic()) throw ConfigError("file cases need windows.train");
        else c.windows.train = c.synth.train;
        if (w.contains("test")) c.windows.test = detail::parse_range(w.at("test"), "windows.test");
        else if (!c.source.synthetic()) throw ConfigError("file cases need windows.test");
        else c.windows.test = c.synth.test;
        c.windows.look_back = s.get("look_back", 1);
        c.windows.horizon = s.get("horizon", 0);
        s.finish();
        if (c.windows.look_back < 1) throw ConfigError("windows.look_back must be >= 1");
        if (c.windows.horizon < 0) throw ConfigError("windows.horizon must be >= 0");
        if (c.windows.test.begin < c.windows.train.end)
            throw ConfigError("windows.test must start after windows.train ends");
        c.synth.train = c.windows.train;
        c.synth.test = c.windows.test;
    }
    {
        Section s = top.child("model");
        auto& m = c.model;
        m.branch_hidden = s.get("branch_hidden", m.branch_hidden);
        m.trunk_hidden = s.get("trunk_hidden", m.trunk_hidden);
        m.latent = s.get("latent", m.latent);
        if (auto a = s.optional<std::string>("activation")) {
            try {
                m.activation = nn::parse_activation(*a);
            } catch (const Error&) {
                throw ConfigError("unknown activation '" + *a + "'");
            }
        }
        m.trunk_time = s.get("trunk_time", m.trunk_time);
        s.finish();
        for (int w : m.branch_hidden)
            if (w < 1) throw ConfigError("model.branch_hidden widths must be >= 1");
        for (int w : m.trunk_hidden)
            if (w < 1) throw ConfigError("model.trunk_hidden widths must be >= 1");
        if (m.latent < 1) throw ConfigError("model.latent must be >= 1");
    }
    {
        Section s = top.child("train");
        auto& t = c.train;
        t.iterations = s.get("iterations", t.iterations);
        t.lr = s.get("lr", t.lr);
        t.log_stride = s.get("log_stride", t.log_stride);
        t.batch_size = s.get("batch_size", t.batch_size);
        t.stride = s.get("stride", t.stride);
        s.finish();
        if (t.iterations < 0) throw ConfigError("train.iterations must be >= 0");
        if (!(t.lr > 0.0)) throw ConfigError("train.lr must be positive");
        if (t.log_stride < 1) throw ConfigError("train.log_stride must be >= 1");
        if (t.stride < 1) throw ConfigError("train.stride must be >= 1");
    }
    {
        Section s = top.child("transfer");
        if (root.contains("transfer") && root.at("transfer").contains("case"))
            c.transfer.target = detail::parse_case(s.child("case"));
        else
            s.get<json>("case", json());
        c.transfer.finetune = s.get("finetune", c.transfer.finetune);
        c.transfer.lr = s.get("lr", c.transfer.lr);
        s.finish();
        if (c.transfer.finetune < 0) throw ConfigError("transfer.finetune must be >= 0");
        if (!(c.transfer.lr > 0.0)) throw ConfigError("transfer.lr must be positive");
    }
    {
        Section s = top.child("pod");
        auto& p = c.pod;
        p.points = s.get("points", p.points);
        s.get<json>("window", json());
        if (root.contains("pod") && root.at("pod").contains("window"))
            p.window = detail::parse_range(root.at("pod").at("window"), "pod.window");
        p.stride = s.get("stride", p.stride);
        p.remove_mean = s.get("remove_mean", p.remove_mean);
        p.observers = s.get("observers", p.observers);
        p.modes_out = s.get("modes_out", p.modes_out);
        s.finish();
        if (p.points < 3) throw ConfigError("pod.points must be >= 3");
        if (p.stride < 1) throw ConfigError("pod.stride must be >= 1");
        if (p.observers < 0) throw ConfigError("pod.observers must be >= 0");
        if (p.modes_out < 1) throw ConfigError("pod.modes_out must be >= 1");
    }
    {
        Section s = top.child("placement");
        auto& p = c.placement;
        p.schedule.theta_steps = s.get("theta_steps", p.schedule.theta_steps);
        p.schedule.lambda_steps = s.get("lambda_steps", p.schedule.lambda_steps);
        p.schedule.total_iterations = s.get("total_iterations", p.schedule.total_iterations);
        p.schedule.realizations = s.get("realizations", p.schedule.realizations);
        p.initial_sigma = s.get("initial_sigma", p.initial_sigma);
        p.lr = s.get("lr", p.lr);
        p.stride = s.get("stride", p.stride);
        p.record_every = s.get("record_every", p.record_every);
        s.finish();
        p.schedule.validate();
        if (p.initial_sigma < 0.0) throw ConfigError("placement.initial_sigma must be >= 0");
        if (!(p.lr > 0.0)) throw ConfigError("placement.lr must be positive");
        if (p.stride < 1) throw ConfigError("placement.stride must be >= 1");
        if (p.record_every < 1) throw ConfigError("placement.record_every must be >= 1");
    }
    {
        Section s = top.child("report");
        c.report.locations = s.get("locations", c.report.locations);
        c.report.heldout_points = s.get("heldout_points", c.report.heldout_points);
        s.finish();
        if (c.report.heldout_points < 0) throw ConfigError("report.heldout_points must be >= 0");
    }
    top.finish();

    if (c.output.empty()) throw ConfigError("no output directory: set 'output' or RISEROP_OUT");
    if (!std::filesystem::is_directory(c.output))
        throw ConfigError("output directory '" + c.output + "' does not exist");
    return c;
}

/// Applies `key.path=value` overrides; the value is read as JSON when it
/// parses, otherwise as a string.
inline void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must be key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
        if (!node->is_object()) throw ConfigError("override '" + path + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    return j;
}

inline std::string env_output_root() {
    const char* v = std::getenv("RISEROP_OUT");
    return v ? std::string(v) : std::string();
}

} // namespace riserop::config
