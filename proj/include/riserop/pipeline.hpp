#pragma once

// Command implementations behind the CLI. Each command validates its whole
// configuration (including file shapes and checkpoint compatibility) before
// computing anything, and writes only deterministic text files.

#include "riserop/checkpoint.hpp"
#include "riserop/config.hpp"
#include "riserop/dataflow.hpp"
#include "riserop/deeponet.hpp"
#include "riserop/diagnostics.hpp"
#include "riserop/placement.hpp"
#include "riserop/pod.hpp"
#include "riserop/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace riserop::pipeline {

using config::CaseSource;
using config::RunConfig;
using dataflow::SensorLayout;
using dataflow::StrainField;

/// A case whose shape is known and checked, ready to be materialized.
struct CasePlan {
    CaseSource source;
    std::optional<StrainField> loaded; ///< file cases: read during planning
    std::size_t steps = 0;
    double z_min = 0.0;
    double z_max = 0.0;
    SensorLayout layout;
};

namespace detail {

inline std::string location_tag(double z) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "z%.3f", z);
    return buf;
}

inline std::string out_path(const RunConfig& c, const std::string& name) {
    return (std::filesystem::path(c.output) / name).string();
}

// cell midpoints over the grid's own extent, so a file case that stops short of the ends stays valid
inline std::vector<double> heldout_locations(int n, double z_min, double z_max, const std::vector<double>& training) {
    std::vector<double> z;
    for (int k = 0; k < n; ++k) {
        const double v = z_min + (z_max - z_min) * (k + 0.5) / n;
        if (std::none_of(training.begin(), training.end(), [&](double t) { return std::abs(t - v) < 1e-9; }))
            z.push_back(v);
    }
    return z;
}

inline void check_locations(const std::vector<double>& zs, const CasePlan& p, const char* what) {
    for (double z : zs)
        if (!(z >= p.z_min && z <= p.z_max))
            throw ConfigError(std::string(what) + " location " + format_double(z) + " outside the field grid [" +
                              format_double(p.z_min) + ", " + format_double(p.z_max) + "]");
}

inline StrainField prepare_file(const CaseSource& src, double length) {
    StrainField f = dataflow::load_strain_field(src.file);
    if (!src.drop_depths_from_top.empty()) {
        std::vector<std::size_t> cols;
        for (double d : src.drop_depths_from_top) {
            const double z = length - d;
            bool found = false;
            for (std::size_t i = 0; i < f.z_grid.size(); ++i)
                if (std::abs(f.z_grid[i] - z) < 1e-6) {
                    cols.push_back(i);
                    found = true;
                }
            if (!found) throw ConfigError("no column at depth " + format_double(d) + " to drop");
        }
        f = dataflow::drop_columns(std::move(f), cols);
    }
    if (src.pad_boundaries) f = dataflow::pad_boundaries(std::move(f), length);
    return f;
}

} // namespace detail

/// Checks windows, layout and report locations against the case's shape.
inline CasePlan plan_case(const RunConfig& c, const CaseSource& src) {
    CasePlan p;
    p.source = src;
    const double length = c.synth.riser.length;
    if (src.synthetic()) {
        p.steps = synth::step_count(c.synth.riser, c.synth.duration);
        p.z_min = 0.0;
        p.z_max = length;
    } else {
        p.loaded = detail::prepare_file(src, length);
        p.steps = p.loaded->steps();
        p.z_min = p.loaded->z_grid.front();
        p.z_max = p.loaded->z_grid.back();
    }
    c.windows.validate(p.steps);
    const auto lb = static_cast<std::size_t>(c.windows.look_back);
    const auto h = static_cast<std::size_t>(c.windows.horizon);
    if (lb + h >= c.windows.train.size() || lb + h >= c.windows.test.size())
        throw ConfigError("look_back + horizon must be shorter than both windows");

    p.layout.length = length;
    p.layout.training = c.training ? *c.training : dataflow::ndp_training_locations(length);
    if (c.observers) p.layout.observers = *c.observers;
    else if (p.layout.training.size() >= 20) p.layout.observers = synth::default_observers(p.layout.training);
    else throw ConfigError("layout.observers is required when fewer than 20 training locations are given");
    detail::check_locations(p.layout.training, p, "training");
    detail::check_locations(p.layout.observers, p, "observer");
    detail::check_locations(c.report.locations, p, "report");
    return p;
}

/// The field of a planned case, normalized on the training window.
inline std::shared_ptr<const StrainField> materialize(const RunConfig& c, const CasePlan& p) {
    StrainField raw;
    if (p.loaded) {
        raw = *p.loaded;
    } else {
        const double u = p.source.velocity ? *p.source.velocity : synth::profile_velocity(*p.source.profile);
        raw = synth::make_case_at_velocity(u, c.seeds.data, p.source.label, c.synth).field;
    }
    return dataflow::split_windows(raw, c.windows).train.field;
}

inline std::vector<double> report_locations(const RunConfig& c, const SensorLayout& layout) {
    if (!c.report.locations.empty()) return c.report.locations;
    const auto& t = layout.training;
    if (t.size() >= 18) return {t[3], t[10], t[17]};
    return {t[t.size() / 2]};
}

inline SampleBatch window_batch(const StrainField& f, const SensorLayout& layout, const dataflow::WindowSpec& spec,
                                const RowRange& window, std::size_t stride = 1) {
    if (spec.look_back == 1 && spec.horizon == 0) return dataflow::build_reconstruction_batch(f, layout, window, stride);
    return dataflow::build_forecast_batch(f, layout, window, spec.look_back, spec.horizon, stride);
}

// -- shared evaluation ----------------------------------------------------------------

struct Evaluated {
    SampleBatch batch;
    Eigen::MatrixXd pred;
};

/// Predictions of `m` over `window` with labels taken at `label_locations`.
inline Evaluated evaluate_on(const deeponet::DeepONetModel& m, const StrainField& f, SensorLayout layout,
                             const std::vector<double>& label_locations, const dataflow::WindowSpec& spec,
                             const RowRange& window) {
    layout.training = label_locations;
    Evaluated e{window_batch(f, layout, spec, window), {}};
    e.pred = deeponet::predict(m, e.batch);
    return e;
}

inline diagnostics::MetricRow metric_row(const std::string& name, const Evaluated& e) {
    return {name, diagnostics::mse(e.pred, e.batch.labels), diagnostics::nmse(e.pred, e.batch.labels)};
}

using NamedWindows = std::vector<std::pair<std::string, RowRange>>;

inline std::vector<diagnostics::Trace> make_traces(const deeponet::DeepONetModel& m, const StrainField& f,
                                                   const SensorLayout& layout, const dataflow::WindowSpec& spec,
                                                   const std::vector<double>& locations, const NamedWindows& windows) {
    std::vector<diagnostics::Trace> out(locations.size());
    for (std::size_t i = 0; i < locations.size(); ++i) out[i].location = detail::location_tag(locations[i]);
    for (const auto& [name, w] : windows) {
        const auto e = evaluate_on(m, f, layout, locations, spec, w);
        for (Eigen::Index s = 0; s < e.pred.rows(); ++s)
            for (std::size_t i = 0; i < locations.size(); ++i) {
                const auto col = static_cast<Eigen::Index>(i);
                out[i].steps.push_back(e.batch.label_steps[static_cast<std::size_t>(s)]);
                out[i].window.push_back(name);
                out[i].truth.push_back(e.batch.labels(s, col));
                out[i].prediction.push_back(e.pred(s, col));
            }
    }
    return out;
}

/// Metrics, traces and RMS profiles of a model on a case.
inline diagnostics::RunArtifacts prediction_artifacts(const RunConfig& c, const deeponet::DeepONetModel& m,
                                                      const CasePlan& plan, const StrainField& f, bool include_train) {
    diagnostics::RunArtifacts run;
    run.sample_rate = f.sample_rate;
    NamedWindows windows;
    if (include_train) windows.emplace_back("train", c.windows.train);
    windows.emplace_back("test", c.windows.test);

    run.rms_locations = plan.layout.training;
    for (const auto& [name, w] : windows) {
        const auto e = evaluate_on(m, f, plan.layout, plan.layout.training, c.windows, w);
        run.metrics.push_back(metric_row(name, e));
        const Eigen::VectorXd rt = diagnostics::rms_profile(e.batch.labels);
        const Eigen::VectorXd rp = diagnostics::rms_profile(e.pred);
        run.rms_columns.emplace_back("truth_" + name, std::vector<double>(rt.data(), rt.data() + rt.size()));
        run.rms_columns.emplace_back("prediction_" + name, std::vector<double>(rp.data(), rp.data() + rp.size()));
    }
    if (c.report.heldout_points > 0) {
        const auto held = detail::heldout_locations(c.report.heldout_points, plan.z_min, plan.z_max, plan.layout.training);
        run.metrics.push_back(metric_row("test_heldout", evaluate_on(m, f, plan.layout, held, c.windows, c.windows.test)));
    }
    run.traces = make_traces(m, f, plan.layout, c.windows, report_locations(c, plan.layout), windows);
    return run;
}

inline std::string resolve_checkpoint(const RunConfig& c, const std::string& flag) {
    std::string path = !flag.empty() ? flag : !c.checkpoint.empty() ? c.checkpoint : detail::out_path(c, "checkpoint.txt");
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
    return path;
}

inline std::string loss_history_csv(const deeponet::LossHistory& h) {
    std::ostringstream os;
    os << "iteration,train_mse,test_mse\n";
    for (std::size_t i = 0; i < h.train.size(); ++i) {
        os << h.train[i].iteration << ',' << format_double(h.train[i].mse) << ',';
        if (i < h.test.size()) os << format_double(h.test[i].mse);
        os << '\n';
    }
    return os.str();
}

inline deeponet::TrainConfig train_config(const RunConfig& c) {
    deeponet::TrainConfig tc;
    tc.iterations = c.train.iterations;
    tc.adam.lr = c.train.lr;
    tc.log_stride = c.train.log_stride;
    tc.batch_size = c.train.batch_size;
    tc.seed = c.seeds.train;
    return tc;
}

inline deeponet::Metadata metadata(const RunConfig& c, const CasePlan& plan, const StrainField& f) {
    return {plan.source.label, f.normalization_scale, c.windows.look_back,
            static_cast<int>(plan.layout.observers.size())};
}

using Written = std::vector<std::string>;

// -- commands ---------------------------------------------------------------------------

/// Writes the (training-window normalized) case field and its spectrum at the
/// middle observer over the training window.
inline Written cmd_synth(const RunConfig& c) {
    if (!c.source.synthetic()) throw ConfigError("synth needs a synthetic case (profile or velocity)");
    const auto plan = plan_case(c, c.source);
    const auto field = materialize(c, plan);
    const double z = plan.layout.observers[plan.layout.observers.size() / 2];
    std::vector<double> signal;
    for (std::size_t row = c.windows.train.begin; row < c.windows.train.end; ++row)
        signal.push_back(dataflow::interpolate(*field, row, z).value);
    const auto spec = diagnostics::spectrum(signal, field->sample_rate);

    Written out{detail::out_path(c, "field.csv"), detail::out_path(c, "synth_spectrum.csv"),
                detail::out_path(c, "synth_summary.txt")};
    dataflow::save_strain_field(*field, out[0]);
    std::ostringstream sp;
    sp << "frequency_hz,magnitude\n";
    for (std::size_t k = 0; k < spec.frequencies.size(); ++k)
        sp << format_double(spec.frequencies[k]) << ',' << format_double(spec.magnitudes[k]) << '\n';
    write_text_file(out[1], sp.str());
    std::ostringstream sum;
    sum << "case," << field->case_label << "\nmax_velocity," << format_double(field->max_velocity)
        << "\nspectrum_location," << format_double(z) << "\ndominant_frequency_hz,"
        << format_double(spec.dominant_frequency) << "\nnormalization_scale,"
        << format_double(field->normalization_scale) << '\n';
    write_text_file(out[2], sum.str());
    return out;
}

inline Written cmd_train(const RunConfig& c) {
    const auto plan = plan_case(c, c.source);
    const auto field = materialize(c, plan);
    const auto train_batch = window_batch(*field, plan.layout, c.windows, c.windows.train, c.train.stride);
    const auto test_batch = window_batch(*field, plan.layout, c.windows, c.windows.test);
    auto model = deeponet::make_model(c.model, metadata(c, plan, *field), c.seeds.model);
    const auto result = deeponet::train(std::move(model), train_batch, train_config(c), &test_batch);

    Written out{detail::out_path(c, "checkpoint.txt"), detail::out_path(c, "loss_history.csv")};
    deeponet::save_checkpoint(result.model, out[0]);
    write_text_file(out[1], loss_history_csv(result.history));
    const auto ptr = deeponet::predict(result.model, train_batch);
    const auto pte = deeponet::predict(result.model, test_batch);
    const std::vector<diagnostics::MetricRow> rows{
        {"train", diagnostics::mse(ptr, train_batch.labels), diagnostics::nmse(ptr, train_batch.labels)},
        {"test", diagnostics::mse(pte, test_batch.labels), diagnostics::nmse(pte, test_batch.labels)}};
    out.push_back(detail::out_path(c, "summary.txt"));
    write_text_file(out.back(), diagnostics::summary_text(rows));
    return out;
}

inline Written cmd_predict(const RunConfig& c, const std::string& checkpoint_flag = "") {
    const auto path = resolve_checkpoint(c, checkpoint_flag);
    const auto plan = plan_case(c, c.source);
    const auto model = deeponet::load_checkpoint(path);
    deeponet::require_compatible(model, static_cast<int>(plan.layout.observers.size()), c.windows.look_back);
    const auto field = materialize(c, plan);
    return diagnostics::emit_report(prediction_artifacts(c, model, plan, *field, false), c.output);
}

/// Zero-shot evaluation on the transfer case, optionally after `finetune`
/// Adam steps on its training window.
inline Written cmd_transfer(const RunConfig& c, const std::string& checkpoint_flag = "",
                            std::optional<long> finetune = std::nullopt) {
    if (!c.transfer.target) throw ConfigError("transfer needs a transfer.case section");
    const long steps = finetune.value_or(c.transfer.finetune);
    if (steps < 0) throw ConfigError("finetune steps must be >= 0");
    const auto path = resolve_checkpoint(c, checkpoint_flag);
    const auto plan = plan_case(c, *c.transfer.target);
    const auto model = deeponet::load_checkpoint(path);
    deeponet::require_compatible(model, static_cast<int>(plan.layout.observers.size()), c.windows.look_back);
    const auto field = materialize(c, plan);
    if (steps == 0) return diagnostics::emit_report(prediction_artifacts(c, model, plan, *field, false), c.output);

    const auto zero_shot = prediction_artifacts(c, model, plan, *field, false);
    deeponet::TrainConfig tc = train_config(c);
    tc.adam.lr = c.transfer.lr;
    const auto batch = window_batch(*field, plan.layout, c.windows, c.windows.train, c.train.stride);
    const auto tuned = deeponet::fine_tune(model, batch, steps, tc);
    auto run = prediction_artifacts(c, tuned, plan, *field, false);
    for (const auto& r : zero_shot.metrics) run.metrics.push_back({"zero_shot_" + r.name, r.mse, r.nmse});
    Written out = diagnostics::emit_report(run, c.output);
    out.push_back(detail::out_path(c, "checkpoint_finetuned.txt"));
    deeponet::save_checkpoint(tuned, out.back());
    return out;
}

inline std::vector<double> pod_locations(const RunConfig& c, const CasePlan& plan) {
    std::vector<double> z;
    const int n = c.pod.points;
    for (int i = 0; i < n; ++i) z.push_back(plan.z_min + (plan.z_max - plan.z_min) * i / (n - 1));
    return z;
}

inline RowRange pod_window(const RunConfig& c, const CasePlan& plan) {
    const RowRange w = c.pod.window.value_or(c.windows.train);
    if (w.end > plan.steps) throw ConfigError("pod.window exceeds the field length");
    return w;
}

inline pod::PODResult pod_of(const RunConfig& c, const CasePlan& plan, const StrainField& f) {
    return pod::pod_decompose(
        pod::build_snapshot_matrix(f, pod_window(c, plan), pod_locations(c, plan), c.pod.stride, c.pod.remove_mean));
}

inline int pod_observer_count(const RunConfig& c, const CasePlan& plan) {
    return c.pod.observers > 0 ? c.pod.observers : static_cast<int>(plan.layout.observers.size());
}

inline Written cmd_pod(const RunConfig& c) {
    const auto plan = plan_case(c, c.source);
    pod_window(c, plan);
    const auto field = materialize(c, plan);
    const auto r = pod_of(c, plan, *field);
    const int m = pod_observer_count(c, plan);
    std::vector<std::pair<std::string, pod::Placement>> placements;
    for (const char* s : {"A", "B", "C"}) placements.emplace_back(s, pod::pod_placement(r, m, pod::parse_strategy(s)));

    std::ostringstream eig, modes, place;
    eig << "mode,eigenvalue,contribution_percent,cumulative_percent\n";
    double cumulative = 0.0;
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) {
        cumulative += r.contributions[static_cast<std::size_t>(k)];
        eig << k + 1 << ',' << format_double(r.eigenvalues[k]) << ','
            << format_double(r.contributions[static_cast<std::size_t>(k)]) << ',' << format_double(cumulative) << '\n';
    }
    const Eigen::Index kept = std::min<Eigen::Index>(c.pod.modes_out, r.modes.cols());
    modes << "z";
    for (Eigen::Index k = 0; k < kept; ++k) modes << ",mode" << k + 1;
    modes << '\n';
    for (std::size_t i = 0; i < r.locations.size(); ++i) {
        modes << format_double(r.locations[i]);
        for (Eigen::Index k = 0; k < kept; ++k) modes << ',' << format_double(r.modes(static_cast<Eigen::Index>(i), k));
        modes << '\n';
    }
    place << "strategy";
    for (int i = 0; i < m; ++i) place << ",z" << i + 1;
    for (int i = 0; i < m; ++i) place << ",mode" << i + 1;
    place << '\n';
    for (const auto& [name, p] : placements) {
        place << name;
        for (double z : p.locations) place << ',' << format_double(z);
        for (int k : p.source_modes) place << ',' << k;
        place << '\n';
    }
    Written out{detail::out_path(c, "pod_eigenvalues.csv"), detail::out_path(c, "pod_modes.csv"),
                detail::out_path(c, "pod_placement.csv")};
    write_text_file(out[0], eig.str());
    write_text_file(out[1], modes.str());
    write_text_file(out[2], place.str());
    return out;
}

// -- placement study ----------------------------------------------------------------

struct TableRow {
    std::string configuration;
    std::vector<double> locations; ///< meters
    double mse = 0.0;
    double nmse = 0.0;
};

struct PlacementStudy {
    placement::LocationDistribution initial;
    placement::PlacementResult result;
    std::vector<TableRow> table; ///< initial, learned, pod_A, pod_B, pod_C
};

/// Trains a fresh model with observers fixed at `locations` and scores it on
/// the prediction (test) window at the training locations.
inline TableRow fixed_location_row(const RunConfig& c, const CasePlan& plan, const StrainField& f,
                                   const std::string& name, const std::vector<double>& locations) {
    SensorLayout layout = plan.layout;
    layout.observers = locations;
    const auto tr = window_batch(f, layout, c.windows, c.windows.train, c.train.stride);
    const auto te = window_batch(f, layout, c.windows, c.windows.test);
    auto meta = metadata(c, plan, f);
    meta.observers = static_cast<int>(locations.size());
    auto model = deeponet::make_model(c.model, meta, c.seeds.model);
    model = deeponet::train(std::move(model), tr, train_config(c)).model;
    const auto pred = deeponet::predict(model, te);
    return {name, locations, diagnostics::mse(pred, te.labels), diagnostics::nmse(pred, te.labels)};
}

inline PlacementStudy run_placement_study(const RunConfig& c) {
    if (c.windows.look_back != 1 || c.windows.horizon != 0)
        throw ConfigError("placement runs in reconstruction mode (look_back 1, horizon 0)");
    const auto plan = plan_case(c, c.source);
    pod_window(c, plan);
    const auto field = materialize(c, plan);
    const double length = plan.layout.length;
    const int m = static_cast<int>(plan.layout.observers.size());

    PlacementStudy study;
    study.initial = placement::random_initial(m, c.placement.initial_sigma, c.seeds.placement);
    const auto data = placement::make_dataset(field, c.windows.train, plan.layout.training, length, c.placement.stride);
    auto model = deeponet::make_model(c.model, metadata(c, plan, *field), c.seeds.model);
    placement::PlacementConfig pc;
    pc.schedule = c.placement.schedule;
    pc.theta_adam.lr = c.train.lr;
    pc.lambda_adam.lr = c.placement.lr;
    pc.record_every = c.placement.record_every;
    study.result = placement::optimize_placement(std::move(model), study.initial, data, pc, c.seeds.placement);

    const auto to_meters = [&](const Eigen::VectorXd& mu) {
        std::vector<double> z;
        for (Eigen::Index i = 0; i < mu.size(); ++i) z.push_back(std::clamp(mu[i] * length, plan.z_min, plan.z_max));
        return z;
    };
    const auto r = pod_of(c, plan, *field);
    study.table.push_back(fixed_location_row(c, plan, *field, "initial", to_meters(study.initial.mean)));
    study.table.push_back(fixed_location_row(c, plan, *field, "learned", to_meters(study.result.distribution.mean)));
    for (const char* s : {"A", "B", "C"})
        study.table.push_back(fixed_location_row(c, plan, *field, std::string("pod_") + s,
                                                 pod::pod_placement(r, m, pod::parse_strategy(s)).locations));
    return study;
}

inline std::string placement_table_csv(const std::vector<TableRow>& table) {
    std::ostringstream os;
    const std::size_t m = table.empty() ? 0 : table.front().locations.size();
    os << "configuration";
    for (std::size_t i = 0; i < m; ++i) os << ",z" << i + 1;
    os << ",test_mse,test_nmse\n";
    for (const auto& row : table) {
        os << row.configuration;
        for (double z : row.locations) os << ',' << format_double(z);
        os << ',' << format_double(row.mse) << ',' << format_double(row.nmse) << '\n';
    }
    return os.str();
}

inline Written cmd_place(const RunConfig& c) {
    const auto study = run_placement_study(c);
    diagnostics::RunArtifacts run;
    run.trajectory = study.result.trajectory;
    for (const auto& row : study.table) run.metrics.push_back({row.configuration, row.mse, row.nmse});
    Written out = diagnostics::emit_report(run, c.output);

    std::ostringstream dist;
    dist << "observer,mu_initial,sigma_initial,mu,sigma\n";
    const auto& d0 = study.initial;
    const auto& d1 = study.result.distribution;
    for (Eigen::Index i = 0; i < d0.size(); ++i)
        dist << i + 1 << ',' << format_double(d0.mean[i]) << ',' << format_double(d0.stddev[i]) << ','
             << format_double(d1.mean[i]) << ',' << format_double(d1.stddev[i]) << '\n';
    out.push_back(detail::out_path(c, "placement_distribution.csv"));
    write_text_file(out.back(), dist.str());
    out.push_back(detail::out_path(c, "placement_table.csv"));
    write_text_file(out.back(), placement_table_csv(study.table));
    out.push_back(detail::out_path(c, "checkpoint_placement.txt"));
    deeponet::save_checkpoint(study.result.model, out.back());
    return out;
}

/// Full report of a checkpoint on its case: both windows, held-out locations,
/// traces, spectra and RMS profiles.
inline Written cmd_report(const RunConfig& c, const std::string& checkpoint_flag = "") {
    const auto path = resolve_checkpoint(c, checkpoint_flag);
    const auto plan = plan_case(c, c.source);
    const auto model = deeponet::load_checkpoint(path);
    deeponet::require_compatible(model, static_cast<int>(plan.layout.observers.size()), c.windows.look_back);
    const auto field = materialize(c, plan);
    return diagnostics::emit_report(prediction_artifacts(c, model, plan, *field, true), c.output);
}

} // namespace riserop::pipeline
