#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "fcd/calculus.hpp"
#include "fcd/synth.hpp"

namespace fcd {

struct IngestReport {
    std::size_t rows_read = 0;     // data rows seen (header excluded)
    std::size_t rows_dropped = 0;  // rows with non-finite values
};

/// Reads a CSV time series. Column selectors are either 0-based indices
/// ("0", "1") or header names. Rows with non-finite values are dropped and
/// counted; non-numeric cells raise DataError with row and column. Output is
/// sorted by x with duplicate x collapsed (mean y).
Signal ingest_csv(const std::string& path, const std::string& x_col, const std::string& y_col,
                  IngestReport* report = nullptr);

void write_signal_csv(const std::string& path, const Signal& signal);

struct CustomModelConfig {
    std::string expression;
    std::vector<std::string> param_names;
    std::string fixed_value_param;
    std::string fixed_slope_param;
    std::vector<double> initial_guess;
    std::map<std::string, std::pair<double, double>> bounds;
};

struct RunConfig {
    std::string input;
    std::string x_col = "0";
    std::string y_col = "1";
    std::string model = "cubic";
    std::optional<CustomModelConfig> custom_model;
    std::string continuity = "auto";  // auto | none | c0 | c1

    double s_f = 0.01;
    int alpha_seg = 5;
    int beta_min = 4;
    LMConfig lm;
    std::map<std::string, std::pair<double, double>> bounds;

    int order = 1;
    std::string out_dir = "fcd-out";
    std::string report = "local";  // local | absolute
    std::size_t window = 60;
    std::size_t stride = 5;
    std::size_t horizon = 30;
    bool bench_large = false;
};

/// Applies a JSON config document over `base`. Unknown or out-of-range keys
/// raise ConfigError before any fitting starts.
RunConfig apply_config_json(const std::string& json_text, RunConfig base);
RunConfig load_config_file(const std::string& path, RunConfig base);

ModelSpec resolve_model(const RunConfig& config);
DecomposeOptions resolve_options(const RunConfig& config, const ModelSpec& model);

/// Versioned structured document ("fcd/1") for a decomposition.
std::string serialize_decomposition(const Decomposition& d);

struct FeatureTensor {
    std::size_t window = 0, stride = 0, horizon = 0;
    std::size_t width = 0;
    std::string layout_json;  // self-describing column descriptor
    std::vector<std::vector<double>> rows;
};

/// Sliding-window feature extraction: each window is decomposed
/// independently; rows hold [raw | per-mode fit, d1 | per-mode segment
/// params, zero-padded]. Windows never extend into the trailing `horizon`
/// points.
FeatureTensor extract_features(const Signal& signal, const ModelSpec& model,
                               const DecomposeOptions& options, std::size_t window,
                               std::size_t stride, std::size_t horizon);

void write_feature_tensor(const std::string& path, const FeatureTensor& tensor);

// CLI entry points; artifacts land in config.out_dir. Errors propagate as
// fcd::Error (the CLI maps codes to exit statuses).
int cmd_decompose(const RunConfig& config, std::ostream& log);
int cmd_derive(const RunConfig& config, std::ostream& log);
int cmd_integrate(const RunConfig& config, std::ostream& log);
int cmd_metrics(const RunConfig& config, std::ostream& log);
int cmd_features(const RunConfig& config, std::ostream& log);
int cmd_bench(const RunConfig& config, std::ostream& log);

/// Exit code for an error per the CLI contract: 2 config, 3 data, 4 numerical.
int exit_code_for(const Error& error);

}  // namespace fcd
