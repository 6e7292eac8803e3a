// riserop: synthesize riser strain fields, train and apply operator networks,
// and study observer placement.

#include "riserop/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config_path;
    std::string output;
    std::vector<std::string> overrides;
    std::string checkpoint;
    long finetune = -1;
};

riserop::config::RunConfig load(const Options& o) {
    auto j = riserop::config::read_json_file(o.config_path);
    for (const auto& s : o.overrides) riserop::config::apply_override(j, s);
    if (!o.output.empty()) j["output"] = o.output;
    return riserop::config::parse_config(j, riserop::config::env_output_root());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Riser strain reconstruction with operator networks"};
    app.require_subcommand(1);
    Options opt;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opt.config_path, "JSON run configuration")->required();
        sub->add_option("-o,--out", opt.output, "output directory (default: config 'output', then $RISEROP_OUT)");
        sub->add_option("--set", opt.overrides, "override a config value, e.g. --set train.iterations=500");
    };
    auto* synth = app.add_subcommand("synth", "generate a synthetic strain field");
    auto* train = app.add_subcommand("train", "train an operator network and save a checkpoint");
    auto* predict = app.add_subcommand("predict", "evaluate a checkpoint on the test window");
    auto* transfer = app.add_subcommand("transfer", "apply a checkpoint to a different case");
    auto* pod = app.add_subcommand("pod", "POD modes, variance contributions and extrema placements");
    auto* place = app.add_subcommand("place", "learn observer locations and compare placements");
    auto* report = app.add_subcommand("report", "full diagnostics of a checkpoint on its case");
    for (auto* sub : {synth, train, predict, transfer, pod, place, report}) common(sub);
    for (auto* sub : {predict, transfer, report})
        sub->add_option("--checkpoint", opt.checkpoint, "checkpoint file (default: <out>/checkpoint.txt)");
    transfer->add_option("--finetune", opt.finetune, "fine-tune steps on the new case (default: config)")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto cfg = load(opt);
        namespace p = riserop::pipeline;
        p::Written written;
        if (synth->parsed()) written = p::cmd_synth(cfg);
        else if (train->parsed()) written = p::cmd_train(cfg);
        else if (predict->parsed()) written = p::cmd_predict(cfg, opt.checkpoint);
        else if (transfer->parsed())
            written = p::cmd_transfer(cfg, opt.checkpoint,
                                      opt.finetune >= 0 ? std::optional<long>(opt.finetune) : std::nullopt);
        else if (pod->parsed()) written = p::cmd_pod(cfg);
        else if (place->parsed()) written = p::cmd_place(cfg);
        else if (report->parsed()) written = p::cmd_report(cfg, opt.checkpoint);
        for (const auto& w : written) std::cout << w << '\n';
        return 0;
    } catch (const riserop::Error& e) {
        std::cerr << "riserop: " << e.what() << '\n';
        return riserop::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "riserop: unexpected failure: " << e.what() << '\n';
        return 1;
    }
}
