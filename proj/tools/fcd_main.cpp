// fcd: functional continuous decomposition of 1-D time series.
//
// Subcommands: decompose | derive | integrate | metrics | features | bench.
// Flags mirror the config-file keys (kebab-case); a --config file overrides
// any flag it names. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 numerical failure.

#include <iostream>

#include "CLI11.hpp"
#include "fcd/io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"functional continuous decomposition"};
    app.require_subcommand(1);

    fcd::RunConfig config;
    std::string config_path;

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        if (needs_input)
            cmd->add_option("--input", config.input, "input CSV path")->required();
        cmd->add_option("--x-col", config.x_col, "x column (index or header name)");
        cmd->add_option("--y-col", config.y_col, "y column (index or header name)");
        cmd->add_option("--model", config.model, "model preset name");
        cmd->add_option("--config", config_path, "JSON config file (overrides flags)");
        cmd->add_option("--out-dir", config.out_dir, "artifact directory");
        cmd->add_option("--s-f", config.s_f, "sample-density scaling factor");
        cmd->add_option("--alpha-seg", config.alpha_seg, "initial segment divisor");
        cmd->add_option("--beta-min", config.beta_min, "minimum segment count");
        cmd->add_option("--continuity", config.continuity, "auto|none|c0|c1");
        cmd->add_option("--lambda0", config.lm.lambda0, "initial LM damping");
        cmd->add_option("--lambda-up", config.lm.lambda_up, "rejection multiplier");
        cmd->add_option("--lambda-down", config.lm.lambda_down, "acceptance divisor");
        cmd->add_option("--ridge-alpha", config.lm.ridge_alpha, "static ridge term");
        cmd->add_option("--max-iters", config.lm.max_iters, "LM iteration cap");
        cmd->add_option("--loss-tol", config.lm.loss_tol, "loss-change stop tolerance");
        cmd->add_option("--step-tol", config.lm.step_tol, "step-norm stop tolerance");
        cmd->add_option("--batch-size", config.lm.batch_size, "segments per forward-fit batch");
    };

    CLI::App* decompose = app.add_subcommand("decompose", "fit all modes and write artifacts");
    add_common(decompose, true);
    decompose->add_option("--report", config.report, "piecewise report space: local|absolute");

    CLI::App* derive = app.add_subcommand("derive", "derivative series of the decomposition");
    add_common(derive, true);
    derive->add_option("--order", config.order, "derivative order (>= 1)");

    CLI::App* integrate = app.add_subcommand("integrate", "running integral of the decomposition");
    add_common(integrate, true);

    CLI::App* metrics = app.add_subcommand("metrics", "fit-quality summary only");
    add_common(metrics, true);

    CLI::App* features = app.add_subcommand("features", "sliding-window feature tensor");
    add_common(features, true);
    features->add_option("--window", config.window, "lookback window length");
    features->add_option("--stride", config.stride, "window stride");
    features->add_option("--horizon", config.horizon, "reserved trailing points");

    CLI::App* bench = app.add_subcommand("bench", "speed benchmark on synthetic suites");
    add_common(bench, false);
    bench->add_flag("--large", config.bench_large, "include N=100000");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) config = fcd::load_config_file(config_path, config);

        if (decompose->parsed()) return fcd::cmd_decompose(config, std::cout);
        if (derive->parsed()) return fcd::cmd_derive(config, std::cout);
        if (integrate->parsed()) return fcd::cmd_integrate(config, std::cout);
        if (metrics->parsed()) return fcd::cmd_metrics(config, std::cout);
        if (features->parsed()) return fcd::cmd_features(config, std::cout);
        if (bench->parsed()) return fcd::cmd_bench(config, std::cout);
    } catch (const fcd::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return fcd::exit_code_for(err);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 4;
    }
    return 0;
}
