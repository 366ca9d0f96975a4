#include "fcd/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace fcd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using ordered_json = nlohmann::ordered_json;

std::string format_g(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::DataError, "cannot open '" + path.string() + "' for writing");
    return out;
}

}  // namespace

int exit_code_for(const Error& error) {
    switch (error.code()) {
        case ErrorCode::ConfigError:
        case ErrorCode::UnknownModel:
        case ErrorCode::ParseError:
        case ErrorCode::UnknownIdentifier:
        case ErrorCode::ContinuityUnsolvable:
            return 2;
        case ErrorCode::DataError:
        case ErrorCode::InvalidSignal:
        case ErrorCode::TooFewPoints:
        case ErrorCode::EmptySegment:
        case ErrorCode::SegmentTooSmall:
            return 3;
        default:
            return 4;  // numerical failure
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    for (auto& s : cells) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    }
    return cells;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;  // from_chars rejects a leading '+'
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    return v;
}

std::optional<std::size_t> parse_index(const std::string& s) {
    if (s.empty()) return std::nullopt;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) return std::nullopt;
    return v;
}

}  // namespace

Signal ingest_csv(const std::string& path, const std::string& x_col, const std::string& y_col,
                  IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::DataError, "cannot open '" + path + "'");

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line[0] == '#') continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.empty()) throw Error(ErrorCode::DataError, "zero usable rows in '" + path + "'");

    auto xi = parse_index(x_col);
    auto yi = parse_index(y_col);
    std::size_t first_data_row = 0;
    if (!xi || !yi) {
        const auto& header = rows[0];
        auto find_col = [&](const std::string& name) -> std::size_t {
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return i;
            throw Error(ErrorCode::DataError, "missing column '" + name + "' in '" + path + "'");
        };
        if (!xi) xi = find_col(x_col);
        if (!yi) yi = find_col(y_col);
        first_data_row = 1;
    } else {
        std::size_t need = std::max(*xi, *yi);
        if (rows[0].size() > need &&
            (!parse_double(rows[0][*xi]) || !parse_double(rows[0][*yi])))
            first_data_row = 1;  // header row
    }

    std::vector<double> xs, ys;
    IngestReport rep;
    for (std::size_t r = first_data_row; r < rows.size(); ++r) {
        const auto& row = rows[r];
        ++rep.rows_read;
        if (row.size() <= std::max(*xi, *yi))
            throw Error(ErrorCode::DataError,
                        "row " + std::to_string(r + 1) + ": missing column", static_cast<long>(r));
        auto cell = [&](std::size_t c) {
            auto v = parse_double(row[c]);
            if (!v)
                throw Error(ErrorCode::DataError,
                            "row " + std::to_string(r + 1) + ", column " + std::to_string(c) +
                                ": non-numeric cell '" + row[c] + "'",
                            static_cast<long>(r));
            return *v;
        };
        double x = cell(*xi), y = cell(*yi);
        if (!std::isfinite(x) || !std::isfinite(y)) {
            ++rep.rows_dropped;
            continue;
        }
        xs.push_back(x);
        ys.push_back(y);
    }
    if (report) *report = rep;
    if (xs.empty()) throw Error(ErrorCode::DataError, "zero usable rows in '" + path + "'");
    return prepare_signal(xs, ys);
}

void write_signal_csv(const std::string& path, const Signal& signal) {
    auto out = open_out(path);
    out << "x,y\n";
    for (std::size_t i = 0; i < signal.size(); ++i)
        out << format_g(signal.x[i], 17) << "," << format_g(signal.y[i], 17) << "\n";
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::pair<double, double> parse_bound_pair(const ordered_json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw Error(ErrorCode::ConfigError, where + ": bounds must be [lo, hi]");
    auto side = [&](const ordered_json& v, double inf_sign) {
        if (v.is_null()) return inf_sign;
        if (!v.is_number()) throw Error(ErrorCode::ConfigError, where + ": bound must be a number or null");
        return v.get<double>();
    };
    double lo = side(j[0], -kInf), hi = side(j[1], kInf);
    if (lo > hi) throw Error(ErrorCode::ConfigError, where + ": lower bound exceeds upper bound");
    return {lo, hi};
}

CustomModelConfig parse_custom_model(const ordered_json& j) {
    CustomModelConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "expression") c.expression = value.get<std::string>();
        else if (key == "param-names") c.param_names = value.get<std::vector<std::string>>();
        else if (key == "fixed-value-param") c.fixed_value_param = value.get<std::string>();
        else if (key == "fixed-slope-param") c.fixed_slope_param = value.get<std::string>();
        else if (key == "initial-guess") c.initial_guess = value.get<std::vector<double>>();
        else if (key == "bounds") {
            for (const auto& [name, pair] : value.items())
                c.bounds[name] = parse_bound_pair(pair, "custom-model.bounds." + name);
        } else {
            throw Error(ErrorCode::ConfigError, "unknown custom-model key '" + key + "'");
        }
    }
    if (c.expression.empty())
        throw Error(ErrorCode::ConfigError, "custom-model requires an expression");
    if (c.param_names.empty())
        throw Error(ErrorCode::ConfigError, "custom-model requires param-names");
    return c;
}

template <typename T>
T positive(const ordered_json& v, const std::string& key) {
    T out = v.get<T>();
    if (!(out > T{0})) throw Error(ErrorCode::ConfigError, key + " must be positive");
    return out;
}

}  // namespace

RunConfig apply_config_json(const std::string& json_text, RunConfig base) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "config root must be an object");

    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "input") base.input = value.get<std::string>();
            else if (key == "x-col") base.x_col = value.is_number_integer()
                                                      ? std::to_string(value.get<long>())
                                                      : value.get<std::string>();
            else if (key == "y-col") base.y_col = value.is_number_integer()
                                                      ? std::to_string(value.get<long>())
                                                      : value.get<std::string>();
            else if (key == "model") base.model = value.get<std::string>();
            else if (key == "custom-model") base.custom_model = parse_custom_model(value);
            else if (key == "continuity") base.continuity = value.get<std::string>();
            else if (key == "s-f") base.s_f = positive<double>(value, key);
            else if (key == "alpha-seg") base.alpha_seg = positive<int>(value, key);
            else if (key == "beta-min") base.beta_min = positive<int>(value, key);
            else if (key == "lambda0") base.lm.lambda0 = positive<double>(value, key);
            else if (key == "lambda-up") base.lm.lambda_up = value.get<double>();
            else if (key == "lambda-down") base.lm.lambda_down = value.get<double>();
            else if (key == "ridge-alpha") base.lm.ridge_alpha = positive<double>(value, key);
            else if (key == "max-iters") base.lm.max_iters = positive<int>(value, key);
            else if (key == "loss-tol") base.lm.loss_tol = positive<double>(value, key);
            else if (key == "step-tol") base.lm.step_tol = positive<double>(value, key);
            else if (key == "batch-size") base.lm.batch_size = positive<int>(value, key);
            else if (key == "bounds") {
                for (const auto& [name, pair] : value.items())
                    base.bounds[name] = parse_bound_pair(pair, "bounds." + name);
            }
            else if (key == "order") base.order = positive<int>(value, key);
            else if (key == "out-dir") base.out_dir = value.get<std::string>();
            else if (key == "report") base.report = value.get<std::string>();
            else if (key == "window") base.window = positive<std::size_t>(value, key);
            else if (key == "stride") base.stride = positive<std::size_t>(value, key);
            else if (key == "horizon") base.horizon = value.get<std::size_t>();
            else if (key == "bench-large") base.bench_large = value.get<bool>();
            else throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("bad config value: ") + e.what());
    }

    if (base.continuity != "auto" && base.continuity != "none" && base.continuity != "c0" &&
        base.continuity != "c1")
        throw Error(ErrorCode::ConfigError, "continuity must be auto|none|c0|c1");
    if (base.report != "local" && base.report != "absolute")
        throw Error(ErrorCode::ConfigError, "report must be local|absolute");
    base.lm.validate();
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return apply_config_json(ss.str(), std::move(base));
}

ModelSpec resolve_model(const RunConfig& config) {
    ModelSpec model;
    if (config.custom_model) {
        const auto& c = *config.custom_model;
        CustomModelOptions opts;
        if (!c.fixed_slope_param.empty()) {
            opts.continuity = ContinuityOrder::C1;
            opts.slope_param = c.fixed_slope_param;
            opts.value_param = c.fixed_value_param;
            if (c.fixed_value_param.empty())
                throw Error(ErrorCode::ConfigError,
                            "custom-model with a fixed slope also needs fixed-value-param");
        } else if (!c.fixed_value_param.empty()) {
            opts.continuity = ContinuityOrder::C0;
            opts.value_param = c.fixed_value_param;
        }
        opts.initial_guess = c.initial_guess;
        if (!c.bounds.empty()) {
            opts.bounds.assign(c.param_names.size(), {-kInf, kInf});
            for (const auto& [name, pair] : c.bounds) {
                auto it = std::find(c.param_names.begin(), c.param_names.end(), name);
                if (it == c.param_names.end())
                    throw Error(ErrorCode::ConfigError, "bounds name '" + name + "' not a parameter");
                opts.bounds[static_cast<std::size_t>(it - c.param_names.begin())] = pair;
            }
        }
        model = parse_model(c.expression, c.param_names, opts);
    } else {
        model = preset(config.model);
    }

    if (!config.bounds.empty()) {
        if (!model.bounds.size()) model.bounds.assign(model.param_count(), {-kInf, kInf});
        for (const auto& [name, pair] : config.bounds) {
            auto it = std::find(model.param_names.begin(), model.param_names.end(), name);
            if (it == model.param_names.end())
                throw Error(ErrorCode::ConfigError,
                            "bounds name '" + name + "' is not a parameter of model '" +
                                model.name + "'");
            model.bounds[static_cast<std::size_t>(it - model.param_names.begin())] = pair;
        }
        // §6 semantics: algebraically derived parameters cannot be bounded
        ContinuityOrder effective = model.continuity;
        if (config.continuity == "none") effective = ContinuityOrder::None;
        if (config.continuity == "c0") effective = ContinuityOrder::C0;
        if (effective != ContinuityOrder::None) {
            auto check = [&](int idx) {
                if (idx < 0) return;
                auto [lo, hi] = model.bounds[static_cast<std::size_t>(idx)];
                if (lo != -kInf || hi != kInf)
                    throw Error(ErrorCode::ConfigError,
                                "continuity-fixed parameter '" +
                                    model.param_names[static_cast<std::size_t>(idx)] +
                                    "' cannot be bounded");
            };
            check(model.value_param);
            if (effective == ContinuityOrder::C1) check(model.slope_param);
        }
    }
    return model;
}

DecomposeOptions resolve_options(const RunConfig& config, const ModelSpec& model) {
    DecomposeOptions opts;
    opts.s_f = config.s_f;
    opts.alpha_seg = config.alpha_seg;
    opts.beta_min = config.beta_min;
    opts.lm = config.lm;
    if (config.continuity == "none") opts.continuity_override = ContinuityOrder::None;
    else if (config.continuity == "c0") opts.continuity_override = ContinuityOrder::C0;
    else if (config.continuity == "c1") opts.continuity_override = ContinuityOrder::C1;
    opts.bounds = Bounds::from_model(model);
    return opts;
}

// ---------------------------------------------------------------------------
// Decomposition serialization (fcd/1)
// ---------------------------------------------------------------------------

namespace {

const char* continuity_name(ContinuityOrder order) {
    switch (order) {
        case ContinuityOrder::None: return "none";
        case ContinuityOrder::C0: return "c0";
        case ContinuityOrder::C1: return "c1";
    }
    return "none";
}

}  // namespace

std::string serialize_decomposition(const Decomposition& d) {
    ordered_json doc;
    doc["format"] = "fcd/1";
    doc["kind"] = "decomposition";

    ordered_json model;
    model["name"] = d.model.name;
    model["expression"] = to_string(d.model.expr, {.param_names = d.model.param_names});
    model["param_names"] = d.model.param_names;
    model["continuity"] = continuity_name(d.model.continuity);
    if (d.model.value_param >= 0)
        model["fixed_value_param"] = d.model.param_names[static_cast<std::size_t>(d.model.value_param)];
    if (d.model.slope_param >= 0)
        model["fixed_slope_param"] = d.model.param_names[static_cast<std::size_t>(d.model.slope_param)];
    doc["model"] = model;

    ordered_json norm;
    norm["mu_x"] = d.norm.mu_x;
    norm["mu_y"] = d.norm.mu_y;
    norm["sigma_x"] = d.norm.sigma_x;
    norm["sigma_y"] = d.norm.sigma_y;
    norm["s_f"] = d.norm.s_f;
    norm["degenerate_x"] = d.norm.degenerate_x;
    norm["degenerate_y"] = d.norm.degenerate_y;
    doc["normalization"] = norm;

    ordered_json layout;
    layout["alpha_seg"] = d.layout.alpha_seg;
    layout["beta_min"] = d.layout.beta_min;
    layout["seg_counts"] = d.layout.seg_counts;
    layout["n_points"] = d.raw.size();
    doc["layout"] = layout;

    SrmseAggregate agg = aggregate_srmse(d);
    doc["srmse"] = ordered_json{{"per_mode", agg.per_mode}, {"overall", agg.overall}};
    doc["unscaled_output"] = d.unscaled_output;

    ordered_json modes = ordered_json::array();
    for (const auto& mode : d.modes) {
        ordered_json jm;
        jm["index"] = mode.mode_index + 1;
        jm["trend"] = mode.is_trend;
        ordered_json segments = ordered_json::array();
        for (std::size_t s = 0; s < mode.segments.size(); ++s) {
            const SegmentFit& seg = mode.segments[s];
            ordered_json js;
            js["index"] = seg.segment_index + 1;
            double x_hi = (s + 1 < mode.segments.size())
                              ? d.raw.x[mode.segments[s + 1].begin]
                              : d.raw.x.back();
            js["range"] = ordered_json::array({d.raw.x[seg.begin], x_hi});
            js["indices"] = ordered_json::array({seg.begin, seg.end});
            js["anchor"] = seg.anchor_raw;
            ordered_json normalized;
            for (std::size_t j = 0; j < d.model.param_count(); ++j)
                normalized[d.model.param_names[j]] = seg.params[j];
            js["normalized"] = normalized;
            if (!seg.physical.empty()) {
                ordered_json physical;
                for (std::size_t j = 0; j < d.model.param_count(); ++j)
                    physical[d.model.param_names[j]] = seg.physical[j];
                js["physical"] = physical;
            }
            js["loss"] = seg.loss;
            js["srmse"] = seg.srmse;
            js["exit"] = ordered_json{{"local_x", seg.exit_local_x},
                                      {"value", seg.exit_value},
                                      {"slope", seg.exit_slope}};
            js["flags"] = ordered_json{{"flat", seg.flat},
                                       {"converged", seg.converged},
                                       {"forced", seg.forced}};
            segments.push_back(js);
        }
        jm["segments"] = segments;
        modes.push_back(jm);
    }
    doc["modes"] = modes;
    return doc.dump(1);
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

FeatureTensor extract_features(const Signal& signal, const ModelSpec& model,
                               const DecomposeOptions& options, std::size_t window,
                               std::size_t stride, std::size_t horizon) {
    const std::size_t n = signal.size();
    if (window < std::max<std::size_t>(2, model.param_count()))
        throw Error(ErrorCode::ConfigError, "window must cover the model's free parameters");
    if (stride < 1) throw Error(ErrorCode::ConfigError, "stride must be >= 1");
    if (window > n)
        throw Error(ErrorCode::DataError, "window of " + std::to_string(window) +
                                              " exceeds signal length " + std::to_string(n));
    if (window + horizon > n)
        throw Error(ErrorCode::DataError, "window + horizon exceed the signal length");

    const std::size_t count = (n - window - horizon) / stride + 1;

    // layout is a function of the window length alone, so probe it once
    std::size_t np = model.param_count();
    std::size_t n_fixed = static_cast<std::size_t>(model.fixed_param_count());
    ModeLayout probe = build_layout(window, options.alpha_seg, options.beta_min,
                                    std::max<std::size_t>(2, np), std::max<std::size_t>(2, np - n_fixed));
    const std::size_t m = static_cast<std::size_t>(probe.modes);
    std::size_t max_segments = 0;
    for (int k : probe.seg_counts) max_segments = std::max(max_segments, static_cast<std::size_t>(k));

    FeatureTensor tensor;
    tensor.window = window;
    tensor.stride = stride;
    tensor.horizon = horizon;
    tensor.width = window + m * 2 * window + m * max_segments * np;

    ordered_json layout;
    layout["format"] = "fcd/1";
    layout["kind"] = "feature-tensor";
    layout["window"] = window;
    layout["stride"] = stride;
    layout["horizon"] = horizon;
    layout["model"] = model.name;
    layout["modes"] = m;
    layout["segments_per_mode"] = probe.seg_counts;
    layout["max_segments"] = max_segments;
    layout["params_per_segment"] = np;
    layout["param_names"] = model.param_names;
    layout["param_space"] = model.has_unscale() ? "physical" : "normalized";
    ordered_json blocks = ordered_json::array();
    std::size_t offset = 0;
    auto add_block = [&](const std::string& name, std::size_t len) {
        blocks.push_back(ordered_json{{"name", name}, {"offset", offset}, {"length", len}});
        offset += len;
    };
    add_block("raw_y", window);
    for (std::size_t k = 0; k < m; ++k) {
        add_block("mode" + std::to_string(k + 1) + "_fit", window);
        add_block("mode" + std::to_string(k + 1) + "_d1", window);
    }
    for (std::size_t k = 0; k < m; ++k)
        add_block("mode" + std::to_string(k + 1) + "_params", max_segments * np);
    layout["blocks"] = blocks;
    layout["total_width"] = tensor.width;
    layout["pad"] = "zero";
    tensor.layout_json = layout.dump();

    tensor.rows.assign(count, std::vector<double>(tensor.width, 0.0));

    DecomposeOptions window_options = options;
    window_options.parallel = false;  // windows parallelize across, not within

    auto fill_row = [&](std::size_t w) {
        std::size_t start = w * stride;
        auto xs = std::span<const double>(signal.x).subspan(start, window);
        auto ys = std::span<const double>(signal.y).subspan(start, window);
        Decomposition d = decompose(xs, ys, model, window_options);
        std::vector<double>& row = tensor.rows[w];

        std::size_t pos = 0;
        for (std::size_t i = 0; i < window; ++i) row[pos++] = ys[i];
        for (std::size_t k = 0; k < m; ++k) {
            std::vector<double> fit = reconstruct(d, static_cast<int>(k), d.raw.x);
            DerivativeSeries d1 = derivative_series(d, static_cast<int>(k), 1);
            // windows are dedup-stable (strictly increasing x), so raw == input
            for (std::size_t i = 0; i < window; ++i) row[pos++] = fit[i];
            for (std::size_t i = 0; i < window; ++i) row[pos++] = d1.values[i];
        }
        for (std::size_t k = 0; k < m; ++k) {
            const ModeFit& mode = d.modes[k];
            std::size_t base = pos;
            for (std::size_t s = 0; s < mode.segments.size() && s < max_segments; ++s) {
                auto params = physical_segment_params(d, mode.segments[s]);
                for (std::size_t j = 0; j < np; ++j) row[base + s * np + j] = params[j];
            }
            pos += max_segments * np;
        }
    };

    // windows are independent; chunk across hardware threads
    std::size_t n_threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    n_threads = std::min(n_threads, count);
    if (n_threads <= 1) {
        for (std::size_t w = 0; w < count; ++w) fill_row(w);
    } else {
        std::vector<std::future<void>> futures;
        for (std::size_t t = 0; t < n_threads; ++t) {
            futures.push_back(std::async(std::launch::async, [&, t] {
                for (std::size_t w = t; w < count; w += n_threads) fill_row(w);
            }));
        }
        for (auto& f : futures) f.get();
    }
    return tensor;
}

void write_feature_tensor(const std::string& path, const FeatureTensor& tensor) {
    auto out = open_out(path);
    out << "# fcd/1 feature-tensor " << tensor.layout_json << "\n";
    for (const auto& row : tensor.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ",";
            out << format_g(row[i], 8);
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

struct LoadedRun {
    Signal signal;
    IngestReport ingest;
    ModelSpec model;
    DecomposeOptions options;
};

LoadedRun load_run(const RunConfig& config) {
    if (config.input.empty()) throw Error(ErrorCode::ConfigError, "--input is required");
    LoadedRun run;
    run.model = resolve_model(config);
    run.options = resolve_options(config, run.model);
    run.signal = ingest_csv(config.input, config.x_col, config.y_col, &run.ingest);
    return run;
}

std::filesystem::path ensure_out_dir(const RunConfig& config) {
    std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::DataError, "cannot create out-dir '" + dir.string() + "'");
    return dir;
}

void write_series(const std::filesystem::path& path, const Decomposition& d) {
    auto out = open_out(path);
    out << "x";
    for (int m = 0; m < d.mode_count(); ++m) out << ",mode_" << (m + 1);
    out << "\n";
    std::vector<std::vector<double>> fits;
    fits.reserve(static_cast<std::size_t>(d.mode_count()));
    for (int m = 0; m < d.mode_count(); ++m) fits.push_back(reconstruct(d, m, d.raw.x));
    for (std::size_t i = 0; i < d.raw.size(); ++i) {
        out << format_g(d.raw.x[i], 17);
        for (const auto& f : fits) out << "," << format_g(f[i], 17);
        out << "\n";
    }
}

void write_segment_table(const std::filesystem::path& path, const Decomposition& d) {
    auto out = open_out(path);
    out << "mode,segment,x_begin,x_end,anchor,n_points,loss,srmse,flat,converged,forced";
    const bool physical = !d.unscaled_output;
    for (const auto& name : d.model.param_names) out << ",p_" << name;
    for (const auto& name : d.model.param_names) out << ",n_" << name;
    out << "\n";
    for (const auto& mode : d.modes) {
        for (std::size_t s = 0; s < mode.segments.size(); ++s) {
            const SegmentFit& seg = mode.segments[s];
            double x_hi = (s + 1 < mode.segments.size()) ? d.raw.x[mode.segments[s + 1].begin]
                                                         : d.raw.x.back();
            out << (mode.mode_index + 1) << "," << (seg.segment_index + 1) << ","
                << format_g(d.raw.x[seg.begin], 17) << "," << format_g(x_hi, 17) << ","
                << format_g(seg.anchor_raw, 17) << "," << (seg.end - seg.begin) << ","
                << format_g(seg.loss, 12) << "," << format_g(seg.srmse, 12) << "," << seg.flat
                << "," << seg.converged << "," << seg.forced;
            for (std::size_t j = 0; j < d.model.param_count(); ++j)
                out << "," << (physical ? format_g(seg.physical[j], 17) : std::string());
            for (std::size_t j = 0; j < d.model.param_count(); ++j)
                out << "," << format_g(seg.params[j], 17);
            out << "\n";
        }
    }
}

void write_metrics(const std::filesystem::path& path, const Decomposition& d,
                   const IngestReport& ingest, std::ostream& log) {
    SrmseAggregate agg = aggregate_srmse(d);
    std::ostringstream text;
    text << "# fcd/1 metrics\n";
    text << "model=" << d.model.name << "\n";
    text << "n_points=" << d.raw.size() << "\n";
    text << "rows_dropped=" << ingest.rows_dropped << "\n";
    text << "modes=" << d.mode_count() << "\n";
    text << "seg_counts=";
    for (std::size_t i = 0; i < d.layout.seg_counts.size(); ++i)
        text << (i ? " " : "") << d.layout.seg_counts[i];
    text << "\n";
    std::size_t flat = 0, forced = 0, segments = 0;
    for (const auto& mode : d.modes)
        for (const auto& seg : mode.segments) {
            ++segments;
            flat += seg.flat;
            forced += seg.forced;
        }
    text << "segments=" << segments << "\nflat_segments=" << flat
         << "\nforced_segments=" << forced << "\n";
    for (std::size_t m = 0; m < agg.per_mode.size(); ++m)
        text << "srmse_mode_" << (m + 1) << "=" << format_g(agg.per_mode[m], 6) << "\n";
    text << "srmse_overall=" << format_g(agg.overall, 6) << "\n";

    auto out = open_out(path);
    out << text.str();
    log << text.str();
}

void write_report(const std::filesystem::path& path, const Decomposition& d,
                  ReportSpace space) {
    auto out = open_out(path);
    out << "# fcd/1 piecewise report\n";
    for (int m = 0; m < d.mode_count(); ++m) out << piecewise_report(d, m, space) << "\n";
}

}  // namespace

int cmd_decompose(const RunConfig& config, std::ostream& log) {
    LoadedRun run = load_run(config);
    auto dir = ensure_out_dir(config);
    Decomposition d = decompose(run.signal.x, run.signal.y, run.model, run.options);

    write_series(dir / "series.csv", d);
    write_segment_table(dir / "segments.csv", d);
    write_report(dir / "report.txt", d,
                 config.report == "absolute" ? ReportSpace::Absolute : ReportSpace::Local);
    {
        auto out = open_out(dir / "decomposition.json");
        out << serialize_decomposition(d) << "\n";
    }
    write_metrics(dir / "metrics.txt", d, run.ingest, log);
    log << "artifacts written to " << dir.string() << "\n";
    return 0;
}

namespace {

void write_series_table(const std::filesystem::path& path, const Decomposition& d,
                        const std::vector<std::vector<double>>& per_mode,
                        const std::string& what) {
    auto out = open_out(path);
    out << "x";
    for (std::size_t m = 0; m < per_mode.size(); ++m) out << "," << what << "_mode_" << (m + 1);
    out << "\n";
    for (std::size_t i = 0; i < d.raw.size(); ++i) {
        out << format_g(d.raw.x[i], 17);
        for (const auto& v : per_mode) out << "," << format_g(v[i], 17);
        out << "\n";
    }
}

}  // namespace

int cmd_derive(const RunConfig& config, std::ostream& log) {
    LoadedRun run = load_run(config);
    auto dir = ensure_out_dir(config);
    Decomposition d = decompose(run.signal.x, run.signal.y, run.model, run.options);

    std::vector<std::vector<double>> values;
    auto expr_out = open_out(dir / "derivative_expressions.txt");
    expr_out << "# fcd/1 derivative expressions, order " << config.order << ", t = x - x_k\n";
    for (int m = 0; m < d.mode_count(); ++m) {
        DerivativeSeries series = derivative_series(d, m, config.order);
        values.push_back(series.values);
        expr_out << "mode " << (m + 1) << ":\n";
        const ModeFit& mode = d.modes[static_cast<std::size_t>(m)];
        for (std::size_t s = 0; s < mode.segments.size(); ++s) {
            PrintOptions popt;
            popt.variable = "t";
            popt.significant_digits = 4;
            popt.param_values = series.segment_params[s];
            expr_out << "  segment " << (s + 1) << " [x_k=" << format_g(mode.segments[s].anchor_raw, 6)
                     << "]: " << to_string(series.expression, popt) << "\n";
        }
    }
    write_series_table(dir / "derivative.csv", d, values, "d" + std::to_string(config.order));
    log << "derivative artifacts written to " << dir.string() << "\n";
    return 0;
}

int cmd_integrate(const RunConfig& config, std::ostream& log) {
    LoadedRun run = load_run(config);
    auto dir = ensure_out_dir(config);
    Decomposition d = decompose(run.signal.x, run.signal.y, run.model, run.options);

    std::vector<std::vector<double>> values;
    auto expr_out = open_out(dir / "integral_expressions.txt");
    expr_out << "# fcd/1 running integrals, t = x - x_k, I = F(t) + C_t per segment\n";
    for (int m = 0; m < d.mode_count(); ++m) {
        IntegralSeries series = integral_series(d, m);
        values.push_back(series.values);
        expr_out << "mode " << (m + 1) << (series.analytic ? "" : " (numeric fallback)") << ":\n";
        if (series.analytic) {
            const ModeFit& mode = d.modes[static_cast<std::size_t>(m)];
            for (std::size_t s = 0; s < mode.segments.size(); ++s) {
                PrintOptions popt;
                popt.variable = "t";
                popt.significant_digits = 4;
                popt.param_values = series.segment_params[s];
                expr_out << "  segment " << (s + 1) << " [x_k="
                         << format_g(mode.segments[s].anchor_raw, 6)
                         << "]: F = " << to_string(series.antiderivative_expr, popt)
                         << ", C_t = " << format_g(series.cumulative_constants[s], 6) << "\n";
            }
        }
    }
    write_series_table(dir / "integral.csv", d, values, "integral");
    log << "integral artifacts written to " << dir.string() << "\n";
    return 0;
}

int cmd_metrics(const RunConfig& config, std::ostream& log) {
    LoadedRun run = load_run(config);
    auto dir = ensure_out_dir(config);
    Decomposition d = decompose(run.signal.x, run.signal.y, run.model, run.options);
    write_metrics(dir / "metrics.txt", d, run.ingest, log);
    return 0;
}

int cmd_features(const RunConfig& config, std::ostream& log) {
    LoadedRun run = load_run(config);
    auto dir = ensure_out_dir(config);
    FeatureTensor tensor = extract_features(run.signal, run.model, run.options, config.window,
                                            config.stride, config.horizon);
    write_feature_tensor((dir / "features.csv").string(), tensor);
    log << "windows=" << tensor.rows.size() << " width=" << tensor.width << "\n";
    log << "feature tensor written to " << (dir / "features.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct BenchRow {
    std::string model;
    std::size_t n;
    double first_s = 0.0;
    double warm_s = 0.0;
    double srmse = 0.0;
};

}  // namespace

int cmd_bench(const RunConfig& config, std::ostream& log) {
    std::vector<std::size_t> sizes = {10, 100, 1000, 10000};
    if (config.bench_large) sizes.push_back(100000);

    auto dir = ensure_out_dir(config);
    std::vector<BenchRow> rows;
    for (const std::string& model_name : {std::string("cubic"), std::string("sin6")}) {
        ModelSpec model = preset(model_name);
        for (std::size_t n : sizes) {
            synth::SyntheticSignal sig = synth::noisy_sine(n, 4242);
            DecomposeOptions opts;
            opts.lm = config.lm;

            BenchRow row;
            row.model = model_name;
            row.n = n;

            auto t0 = std::chrono::steady_clock::now();
            Decomposition first = decompose(sig.x, sig.y, model, opts);
            row.first_s = seconds_since(t0);
            row.srmse = aggregate_srmse(first).overall;

            std::vector<double> times;
            for (int rep = 0; rep < 5; ++rep) {
                auto t1 = std::chrono::steady_clock::now();
                Decomposition d = decompose(sig.x, sig.y, model, opts);
                times.push_back(seconds_since(t1));
            }
            std::sort(times.begin(), times.end());
            row.warm_s = times[times.size() / 2];
            rows.push_back(row);
            log << model_name << " N=" << n << " first=" << format_g(row.first_s, 4)
                << "s warm=" << format_g(row.warm_s, 4) << "s srmse=" << format_g(row.srmse, 4)
                << "\n";
        }
    }

    auto out = open_out(dir / "bench.csv");
    out << "model,n,first_run_s,subsequent_runs_s,mean_srmse\n";
    for (const auto& row : rows)
        out << row.model << "," << row.n << "," << format_g(row.first_s, 6) << ","
            << format_g(row.warm_s, 6) << "," << format_g(row.srmse, 6) << "\n";

    for (const std::string& model_name : {std::string("cubic"), std::string("sin6")}) {
        log << "\nComputational performance, " << model_name << " model\n";
        log << "points      first run    subsequent runs\n";
        for (const auto& row : rows) {
            if (row.model != model_name) continue;
            char line[128];
            std::snprintf(line, sizeof(line), "%-11zu %-12s %-12s\n", row.n,
                          (format_g(row.first_s, 4) + " s").c_str(),
                          (format_g(row.warm_s, 4) + " s").c_str());
            log << line;
        }
    }
    return 0;
}

}  // namespace fcd
