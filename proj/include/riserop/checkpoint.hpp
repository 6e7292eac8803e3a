#pragma once

// Plain-text model checkpoints.
//
//   riserop-checkpoint 1
//   case_label <text>
//   normalization_scale <f>
//   look_back <int>
//   observers <int>
//   latent <int>
//   trunk_time <0|1>
//   bias <f>
//   branch_spec <activation> <w0> <w1> ...
//   trunk_spec <activation> <w0> <w1> ...
//   layer <branch|trunk> <index> <rows> <cols>
//   <rows lines of cols weights>
//   <one line of rows biases>
//   ...
//   end
//
// Floats are written with 17 significant digits, which round-trips doubles.

#include "riserop/deeponet.hpp"
#include "riserop/error.hpp"
#include "riserop/format.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace riserop::deeponet {

inline constexpr int checkpoint_version = 1;

namespace detail {

inline void write_spec(std::ostream& os, const char* key, const nn::MLPSpec& spec) {
    os << key << ' ' << nn::to_string(spec.activation);
    for (int w : spec.layer_widths) os << ' ' << w;
    os << '\n';
}

inline void write_layers(std::ostream& os, const char* name, const nn::MLPParams& p) {
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        os << "layer " << name << ' ' << i << ' ' << l.weight.rows() << ' ' << l.weight.cols() << '\n';
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) os << (c ? " " : "") << format_double(l.weight(r, c));
            os << '\n';
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) os << (r ? " " : "") << format_double(l.bias[r]);
        os << '\n';
    }
}

class LineReader {
public:
    explicit LineReader(std::istream& is) : is_(is) {}

    std::string next(const char* what) {
        std::string line;
        if (!std::getline(is_, line)) throw DataError(std::string("checkpoint truncated: expected ") + what);
        ++line_no_;
        return line;
    }

    /// Reads "<key> <rest>" and returns rest.
    std::string field(const std::string& key) {
        std::string line = next(key.c_str());
        if (line.compare(0, key.size() + 1, key + " ") != 0)
            throw DataError("checkpoint line " + std::to_string(line_no_) + ": expected '" + key + "'");
        return line.substr(key.size() + 1);
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::istream& is_;
    std::size_t line_no_ = 0;
};

inline nn::MLPSpec parse_spec(const std::string& text) {
    std::istringstream ss(text);
    std::string act;
    ss >> act;
    nn::MLPSpec spec;
    try {
        spec.activation = nn::parse_activation(act);
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    std::string tok;
    while (ss >> tok) spec.layer_widths.push_back(static_cast<int>(parse_long(tok, "layer width")));
    spec.validate();
    return spec;
}

inline std::vector<double> parse_row(const std::string& line, std::size_t expected, std::size_t line_no) {
    std::vector<double> out;
    out.reserve(expected);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(parse_double(tok, "checkpoint value"));
    if (out.size() != expected)
        throw DataError("checkpoint line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                        " values, found " + std::to_string(out.size()));
    return out;
}

inline nn::MLPParams read_layers(LineReader& in, const char* name, const nn::MLPSpec& spec) {
    nn::MLPParams p;
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        std::istringstream hdr(in.field("layer"));
        std::string net;
        std::size_t index = 0;
        Eigen::Index rows = 0, cols = 0;
        hdr >> net >> index >> rows >> cols;
        if (!hdr || net != name || index != i)
            throw DataError("checkpoint: malformed layer header for " + std::string(name) + " layer " + std::to_string(i));
        if (rows != spec.layer_widths[i + 1] || cols != spec.layer_widths[i])
            throw ShapeError("checkpoint: " + std::string(name) + " layer " + std::to_string(i) +
                             " shape does not match its declared spec");
        nn::Layer l{nn::MatrixXd(rows, cols), nn::VectorXd(rows)};
        for (Eigen::Index r = 0; r < rows; ++r) {
            auto vals = parse_row(in.next("weight row"), static_cast<std::size_t>(cols), in.line_no());
            for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = vals[static_cast<std::size_t>(c)];
        }
        auto b = parse_row(in.next("bias row"), static_cast<std::size_t>(rows), in.line_no());
        for (Eigen::Index r = 0; r < rows; ++r) l.bias[r] = b[static_cast<std::size_t>(r)];
        p.layers.push_back(std::move(l));
    }
    return p;
}

} // namespace detail

inline void write_checkpoint(std::ostream& os, const DeepONetModel& model) {
    model.validate();
    os << "riserop-checkpoint " << checkpoint_version << '\n';
    os << "case_label " << model.meta.case_label << '\n';
    os << "normalization_scale " << format_double(model.meta.normalization_scale) << '\n';
    os << "look_back " << model.meta.look_back << '\n';
    os << "observers " << model.meta.observers << '\n';
    os << "latent " << model.latent << '\n';
    os << "trunk_time " << (model.trunk_time ? 1 : 0) << '\n';
    os << "bias " << format_double(model.bias) << '\n';
    detail::write_spec(os, "branch_spec", model.branch.spec);
    detail::write_spec(os, "trunk_spec", model.trunk.spec);
    detail::write_layers(os, "branch", model.branch.params);
    detail::write_layers(os, "trunk", model.trunk.params);
    os << "end\n";
}

inline DeepONetModel read_checkpoint(std::istream& is) {
    detail::LineReader in(is);
    const std::string version = in.field("riserop-checkpoint");
    if (parse_long(version, "checkpoint version") != checkpoint_version)
        throw DataError("checkpoint version " + version + " is not supported (expected " +
                        std::to_string(checkpoint_version) + ")");
    DeepONetModel m;
    m.meta.case_label = in.field("case_label");
    m.meta.normalization_scale = parse_double(in.field("normalization_scale"), "normalization_scale");
    m.meta.look_back = static_cast<int>(parse_long(in.field("look_back"), "look_back"));
    m.meta.observers = static_cast<int>(parse_long(in.field("observers"), "observers"));
    m.latent = static_cast<int>(parse_long(in.field("latent"), "latent"));
    m.trunk_time = parse_long(in.field("trunk_time"), "trunk_time") != 0;
    m.bias = parse_double(in.field("bias"), "bias");
    m.branch.spec = detail::parse_spec(in.field("branch_spec"));
    m.trunk.spec = detail::parse_spec(in.field("trunk_spec"));
    m.branch.params = detail::read_layers(in, "branch", m.branch.spec);
    m.trunk.params = detail::read_layers(in, "trunk", m.trunk.spec);
    if (in.next("end") != "end") throw DataError("checkpoint: missing end marker");
    m.validate();
    return m;
}

inline void save_checkpoint(const DeepONetModel& model, const std::string& path) {
    std::ostringstream os;
    write_checkpoint(os, model);
    write_text_file(path, os.str());
}

inline DeepONetModel load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(is);
}

/// Rejects using a model with a different observer count or look-back.
inline void require_compatible(const DeepONetModel& model, int observers, int look_back) {
    if (model.meta.observers != observers || model.meta.look_back != look_back)
        throw ShapeError("checkpoint was trained for m=" + std::to_string(model.meta.observers) +
                         ", lb=" + std::to_string(model.meta.look_back) + " but m=" + std::to_string(observers) +
                         ", lb=" + std::to_string(look_back) + " was requested");
}

} // namespace riserop::deeponet
