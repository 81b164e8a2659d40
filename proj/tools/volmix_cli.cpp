// volmix command-line tool.
//
//   volmix features  --target-trades F --target-book F --external-trades F --external-book F
//   volmix dataset   [--features-dir D] [--window-h H]
//   volmix train     tme|garch|gbm [--dataset D] [--out F]
//   volmix predict   --model F [--dataset D] [--split test]
//   volmix evaluate  --model F [--model F ...] [--dataset D] [--quartiles]
//   volmix simulate  tme|garch|volume
//   volmix repro     [--fast] [--criterion NAME ...]
//
// Exit codes: 0 ok, 1 acceptance failure, 2 input error, 3 training error,
// 4 evaluation error.

#include "volmix/acceptance.hpp"
#include "volmix/evaluate.hpp"
#include "volmix/garch.hpp"
#include "volmix/gbm.hpp"
#include "volmix/io.hpp"
#include "volmix/market_data.hpp"
#include "volmix/preprocess.hpp"
#include "volmix/synthetic.hpp"
#include "volmix/tme.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace volmix;

namespace {

enum Exit { kOk = 0, kAcceptance = 1, kInput = 2, kTraining = 3, kEvaluation = 4 };

struct Failure {
    int code;
    std::string message;
};

/// Runs f and turns any library or I/O failure into an exit code.
template <typename F>
auto stage(int code, F&& f) {
    try {
        return f();
    } catch (const Failure&) {
        throw;
    } catch (const std::exception& e) {
        throw Failure{code, e.what()};
    }
}

struct Settings {
    std::uint64_t seed = 7;
    std::string horizon = "1m";
    std::string out_dir = ".";
    bool ts_ms = false;

    // features
    std::string target_trades, target_book, external_trades, external_book;

    // dataset
    std::string features_dir;
    std::size_t window_h = 10;
    double split_train = 0.7;
    double split_validation = 0.1;

    // train / predict / evaluate
    std::string dataset;
    std::string model_out;
    std::vector<std::string> models;
    std::string split = "test";
    bool quartiles = false;

    tme::TrainConfig tme;

    std::string p_range = "1:5";
    std::string q_range = "1:5";
    std::string exog = "off";
    std::size_t acf_lags = 20;

    std::size_t n_draws = 20;
    gbm::SearchRanges gbm;

    // simulate
    std::size_t n = 10000;
    std::size_t days = 30;
    double zero_rate = 0.0225;

    // repro
    bool fast = false;
    std::vector<std::string> criteria;
};

template <typename T>
void take(const json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

/// Keys of the --config file mirror the long flag names (underscores for
/// dashes); nested "tme" and "gbm" objects hold the model settings.
void apply_config(const json& j, Settings& s) {
    take(j, "seed", s.seed);
    take(j, "horizon", s.horizon);
    take(j, "out_dir", s.out_dir);
    take(j, "ts_ms", s.ts_ms);
    take(j, "window_h", s.window_h);
    take(j, "split_train", s.split_train);
    take(j, "split_validation", s.split_validation);
    take(j, "dataset", s.dataset);
    take(j, "p_range", s.p_range);
    take(j, "q_range", s.q_range);
    take(j, "exog", s.exog);
    take(j, "n_draws", s.n_draws);
    take(j, "n", s.n);
    take(j, "days", s.days);
    take(j, "zero_rate", s.zero_rate);
    if (j.contains("tme")) {
        const auto& t = j.at("tme");
        take(t, "lr", s.tme.learning_rate);
        take(t, "batch", s.tme.batch_size);
        take(t, "lambda", s.tme.l2_lambda);
        take(t, "regularize_bias", s.tme.regularize_bias);
        take(t, "trajectories", s.tme.n_trajectories);
        take(t, "burn_in", s.tme.burn_in_epochs);
        take(t, "epochs", s.tme.max_epochs);
        take(t, "members", s.tme.ensemble_size);
    }
    if (j.contains("gbm")) {
        const auto& g = j.at("gbm");
        take(g, "n_trees_min", s.gbm.n_trees_min);
        take(g, "n_trees_max", s.gbm.n_trees_max);
        take(g, "max_features_min", s.gbm.max_features_min);
        take(g, "max_features_max", s.gbm.max_features_max);
        take(g, "min_leaf_min", s.gbm.min_leaf_min);
        take(g, "min_leaf_max", s.gbm.min_leaf_max);
        take(g, "depth_min", s.gbm.depth_min);
        take(g, "depth_max", s.gbm.depth_max);
        take(g, "lr_min", s.gbm.lr_min);
        take(g, "lr_max", s.gbm.lr_max);
    }
}

std::optional<std::string> find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return argv[i + 1];
        if (std::strncmp(argv[i], "--config=", 9) == 0) return std::string(argv[i] + 9);
    }
    return std::nullopt;
}

std::vector<int> parse_range(const std::string& text) {
    const auto colon = text.find(':');
    try {
        const int lo = std::stoi(text.substr(0, colon));
        const int hi = colon == std::string::npos ? lo : std::stoi(text.substr(colon + 1));
        if (lo < 1 || hi > 10 || lo > hi) throw std::out_of_range(text);
        std::vector<int> out;
        for (int v = lo; v <= hi; ++v) out.push_back(v);
        return out;
    } catch (const std::exception&) {
        throw Failure{kInput, "range '" + text + "' must look like lo:hi with 1 <= lo <= hi <= 10"};
    }
}

std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

json tme_config_json(const tme::TrainConfig& c) {
    return {{"lr", c.learning_rate},       {"batch", c.batch_size},    {"lambda", c.l2_lambda},
            {"regularize_bias", c.regularize_bias}, {"trajectories", c.n_trajectories},
            {"burn_in", c.burn_in_epochs}, {"epochs", c.max_epochs},  {"members", c.ensemble_size},
            {"seed", c.seed}};
}

json gbm_ranges_json(const gbm::SearchRanges& r) {
    return {{"n_trees", {r.n_trees_min, r.n_trees_max}},
            {"max_features", {r.max_features_min, r.max_features_max}},
            {"min_leaf", {r.min_leaf_min, r.min_leaf_max}},
            {"depth", {r.depth_min, r.depth_max}},
            {"lr", {r.lr_min, r.lr_max}}};
}

/// Records the command, its effective configuration and the files it wrote.
void write_run_record(const fs::path& out_dir, const std::string& command, const json& config,
                      const std::vector<fs::path>& outputs) {
    fs::create_directories(out_dir);
    json files = json::array();
    for (const auto& p : outputs) files.push_back(p.string());
    json record = {{"command", command}, {"config", config}, {"config_hash", config_hash(config)}, {"outputs", files}};
    std::ofstream out(out_dir / ("run_" + command + ".json"));
    out << record.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Failure{kInput, "cannot write " + path.string()};
    out.precision(17);
    return out;
}

fs::path dataset_dir(const Settings& s) { return s.dataset.empty() ? fs::path(s.out_dir) / "dataset" : fs::path(s.dataset); }

// ------------------------------------------------------------------ features

std::string feature_file_name(market_data::SourceId id) {
    return "features_" + market_data::to_string(id.market) + "_" + market_data::to_string(id.kind) + ".csv";
}

int cmd_features(const Settings& s) {
    using namespace market_data;
    const auto horizon = stage(kInput, [&] { return preprocess::parse_horizon(s.horizon); });
    const Epoch interval = preprocess::horizon_seconds(horizon);
    const TradeCsvSchema ts{s.ts_ms};
    const BookCsvSchema bs{s.ts_ms};

    auto [tt, et, tb, eb] = stage(kInput, [&] {
        return std::make_tuple(load_trades(s.target_trades, ts), load_trades(s.external_trades, ts),
                               load_book(s.target_book, bs), load_book(s.external_book, bs));
    });
    if (tb.empty() || eb.empty()) throw Failure{kInput, "book files must hold at least one snapshot"};

    // The grid starts at the first interval where both books have a snapshot
    // and ends at the last interval covered by every input.
    const Epoch first = std::max(tb.front().timestamp, eb.front().timestamp);
    Epoch last = std::min(tb.back().timestamp, eb.back().timestamp);
    if (!tt.empty()) last = std::max(last, tt.back().timestamp);
    const Epoch start = first - ((first % interval) + interval) % interval;
    const Epoch end = last - ((last % interval) + interval) % interval;
    if (end < start) throw Failure{kInput, "inputs do not overlap in time"};
    const auto grid = make_grid(start, interval, static_cast<std::size_t>((end - start) / interval + 1));

    auto book_features = [&](const std::vector<BookSnapshot>& book, Market market) {
        return compute_book_features_on_grid(book, market, grid, interval);
    };
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    std::vector<fs::path> written;
    stage(kInput, [&] {
        const std::vector<std::vector<FeatureVector>> all{
            compute_trade_features(tt, Market::Target, interval, grid), book_features(tb, Market::Target),
            compute_trade_features(et, Market::External, interval, grid), book_features(eb, Market::External)};
        for (std::size_t k = 0; k < kAllSources.size(); ++k) {
            const auto path = dir / feature_file_name(kAllSources[k]);
            auto out = open_out(path);
            write_features(out, all[k]);
            written.push_back(path);
        }
        return 0;
    });
    const json config = {{"horizon", s.horizon},
                         {"ts_ms", s.ts_ms},
                         {"inputs", {s.target_trades, s.target_book, s.external_trades, s.external_book}}};
    write_run_record(dir, "features", config, written);
    std::cerr << "features: " << grid.size() << " intervals of " << interval << " s from " << start << '\n';
    return kOk;
}

// ------------------------------------------------------------------- dataset

json dataset_config_json(const Settings& s) {
    return {{"horizon", s.horizon},
            {"window_h", s.window_h},
            {"split", {s.split_train, s.split_validation}},
            {"seed", s.seed}};
}

int cmd_dataset(const Settings& s) {
    using namespace market_data;
    preprocess::DatasetConfig cfg;
    cfg.horizon = stage(kInput, [&] { return preprocess::parse_horizon(s.horizon); });
    cfg.window_h = s.window_h;
    cfg.split = {s.split_train, s.split_validation};
    if (s.window_h < 1) throw Failure{kInput, "window_h must be at least 1"};
    if (!(s.split_train > 0.0 && s.split_validation >= 0.0 && s.split_train + s.split_validation < 1.0)) {
        throw Failure{kInput, "split fractions must satisfy train > 0, validation >= 0, train + validation < 1"};
    }
    const fs::path in_dir = s.features_dir.empty() ? fs::path(s.out_dir) : fs::path(s.features_dir);
    const Epoch interval = preprocess::horizon_seconds(cfg.horizon);

    const auto sources = stage(kInput, [&] {
        std::vector<std::vector<FeatureVector>> out;
        for (const auto& id : kAllSources) {
            const auto path = in_dir / feature_file_name(id);
            std::ifstream in(path);
            if (!in) throw Error(Errc::Io, "cannot open " + path.string());
            out.push_back(read_features(in));
        }
        return out;
    });
    std::vector<Epoch> grid;
    for (const auto& fv : sources[0]) grid.push_back(fv.interval_start);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] - grid[i - 1] != interval) {
            throw Failure{kInput, "feature grid spacing does not match --horizon " + s.horizon};
        }
    }
    const auto ds = stage(kInput, [&] {
        return preprocess::build_dataset(grid, sources, preprocess::target_volume(sources[0]), cfg);
    });
    const json config = dataset_config_json(s);
    const auto dir = dataset_dir(s);
    stage(kInput, [&] {
        io::write_dataset(dir, ds, config_hash(config));
        return 0;
    });
    write_run_record(s.out_dir, "dataset", config, {dir / io::kManifestJson, dir / io::kDatasetCsv});
    std::cerr << "dataset: " << ds.split.train.size() << " train, " << ds.split.validation.size() << " validation, "
              << ds.split.test.size() << " test instances; " << 100.0 * ds.dropped_fraction
              << "% zero intervals dropped\n";
    return kOk;
}

// -------------------------------------------------------------------- shared

struct Prepared {
    io::LoadedDataset loaded;
    std::vector<preprocess::ModelInstance> train, validation, test;
};

/// Loads the dataset and standardizes the features with `scaler`, or with a
/// scaler fitted on the training split when `scaler` is empty.
Prepared prepare(const fs::path& dir, preprocess::FeatureScaler& scaler) {
    Prepared p;
    p.loaded = stage(kInput, [&] { return io::read_dataset(dir); });
    auto& sp = p.loaded.dataset.split;
    if (scaler.empty()) scaler = stage(kInput, [&] { return preprocess::fit_scaler(sp.train); });
    p.train = std::move(sp.train);
    p.validation = std::move(sp.validation);
    p.test = std::move(sp.test);
    stage(kInput, [&] {
        scaler.apply(p.train);
        scaler.apply(p.validation);
        scaler.apply(p.test);
        return 0;
    });
    return p;
}

io::ModelContext make_context(const Prepared& p, const preprocess::FeatureScaler& scaler, const json& config,
                              std::uint64_t seed) {
    io::ModelContext c;
    c.horizon = p.loaded.dataset.config.horizon;
    c.shape = p.loaded.dataset.shape;
    c.profile = p.loaded.dataset.profile;
    c.scaler = scaler;
    c.dataset_hash = p.loaded.config_hash;
    c.config_hash = config_hash(config);
    c.seed = seed;
    return c;
}

/// Lag-1 features of every instance: the last column of each window.
Matrix lag1_features(const std::vector<const preprocess::ModelInstance*>& rows) {
    if (rows.empty()) return {};
    std::size_t width = 0;
    for (const auto& w : rows.front()->windows) width += w.rows();
    Matrix x(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t c = 0;
        for (const auto& w : rows[i]->windows) {
            for (std::size_t f = 0; f < w.rows(); ++f) x(i, c++) = w(f, w.cols() - 1);
        }
    }
    return x;
}

std::vector<const preprocess::ModelInstance*> chain(std::initializer_list<const std::vector<preprocess::ModelInstance>*> parts) {
    std::vector<const preprocess::ModelInstance*> out;
    for (const auto* part : parts) {
        for (const auto& inst : *part) out.push_back(&inst);
    }
    return out;
}

std::vector<double> log_series(const std::vector<const preprocess::ModelInstance*>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto* r : rows) out.push_back(std::log(r->y));
    return out;
}

// --------------------------------------------------------------------- train

int train_tme(const Settings& s, const fs::path& out_path, std::ostream& log) {
    tme::TrainConfig cfg = s.tme;
    cfg.seed = s.seed;
    stage(kInput, [&] {
        cfg.validate_ranges();
        return 0;
    });
    preprocess::FeatureScaler scaler;
    auto p = prepare(dataset_dir(s), scaler);
    const json config = {{"model", "tme"}, {"dataset_hash", p.loaded.config_hash}, {"tme", tme_config_json(cfg)}};
    log << "config_hash " << config_hash(config) << '\n' << "config " << config.dump() << '\n';

    std::vector<tme::Trajectory> trajectories;
    const auto ensemble =
        stage(kTraining, [&] { return tme::collect_ensemble(cfg, p.train, p.validation, trajectories); });
    for (const auto& tr : trajectories) {
        log << "trajectory " << tr.id << " seed " << tr.seed << '\n';
        for (std::size_t e = 0; e < tr.train_loss.size(); ++e) {
            log << "  epoch " << e + 1 << " train_nll " << tr.train_loss[e] << " validation_nll "
                << tr.validation_nll[e] << '\n';
        }
    }
    for (std::size_t m = 0; m < ensemble.size(); ++m) {
        const auto& pr = ensemble.provenance[m];
        log << "member " << m << " trajectory " << pr.trajectory << " epoch " << pr.epoch << '\n';
    }
    io::TmeModelFile file{make_context(p, scaler, config, s.seed), cfg, ensemble};
    stage(kInput, [&] {
        io::save_model(out_path, file);
        return 0;
    });
    return kOk;
}

int train_garch(const Settings& s, const fs::path& out_path, std::ostream& log) {
    const auto p_range = parse_range(s.p_range);
    const auto q_range = parse_range(s.q_range);
    if (s.exog != "on" && s.exog != "off") throw Failure{kInput, "--exog must be on or off"};
    const bool use_exog = s.exog == "on";
    preprocess::FeatureScaler scaler;
    auto p = prepare(dataset_dir(s), scaler);
    const json config = {{"model", "garch"},      {"dataset_hash", p.loaded.config_hash},
                         {"p_range", s.p_range}, {"q_range", s.q_range},
                         {"exog", s.exog}};
    log << "config_hash " << config_hash(config) << '\n' << "config " << config.dump() << '\n';

    const auto rows = chain({&p.train});
    const auto y = log_series(rows);
    const Matrix x = lag1_features(rows);
    const auto sel =
        stage(kTraining, [&] { return garch::select_order(y, use_exog ? &x : nullptr, p_range, q_range); });
    for (const auto& r : sel.table) {
        log << "p " << r.p << " q " << r.q << (r.ok ? " loglik " + std::to_string(r.loglik) + " aic " + std::to_string(r.aic)
                                                    : " failed: " + r.error)
            << '\n';
    }
    log << "selected p " << sel.best.spec.p << " q " << sel.best.spec.q << '\n';
    log << "report " << io::garch_report_json(sel.best) << '\n';

    io::GarchModelFile file{make_context(p, scaler, config, s.seed), sel.best, sel.table};
    const fs::path dir(s.out_dir);
    stage(kInput, [&] {
        io::save_model(out_path, file);
        auto report = open_out(dir / "garch_report.json");
        report << io::garch_report_json(sel.best) << '\n';
        auto acf = open_out(dir / "garch_acf.csv");
        io::write_acf_csv(acf, garch::residual_acf(sel.best.residuals, s.acf_lags));
        return 0;
    });
    return kOk;
}

int train_gbm(const Settings& s, const fs::path& out_path, std::ostream& log) {
    stage(kInput, [&] {
        s.gbm.validate();
        return 0;
    });
    if (s.n_draws < 1) throw Failure{kInput, "--n-draws must be at least 1"};
    preprocess::FeatureScaler scaler;
    auto p = prepare(dataset_dir(s), scaler);
    const json config = {{"model", "gbm"},
                         {"dataset_hash", p.loaded.config_hash},
                         {"n_draws", s.n_draws},
                         {"ranges", gbm_ranges_json(s.gbm)},
                         {"seed", s.seed}};
    log << "config_hash " << config_hash(config) << '\n' << "config " << config.dump() << '\n';

    const auto result = stage(kTraining, [&] {
        return gbm::random_search(gbm::design_matrix(p.train), gbm::log_targets(p.train),
                                  gbm::design_matrix(p.validation), gbm::log_targets(p.validation), s.n_draws, s.seed,
                                  s.gbm);
    });
    log << "draw n_trees max_features_frac min_samples_leaf max_depth learning_rate seed validation_rmse\n";
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const auto& r = result.table[i];
        log << i << ' ' << r.hyper.n_trees << ' ' << r.hyper.max_features_frac << ' ' << r.hyper.min_samples_leaf << ' '
            << r.hyper.max_depth << ' ' << r.hyper.learning_rate << ' ' << r.hyper.seed << ' ' << r.validation_rmse
            << '\n';
    }
    log << "best draw " << result.best_index << '\n';
    for (std::size_t m = 0; m < result.model.train_sse.size(); ++m) {
        log << "stage " << m << " train_sse " << result.model.train_sse[m] << '\n';
    }
    io::GbmModelFile file{make_context(p, scaler, config, s.seed), result.model, result.table};
    stage(kInput, [&] {
        io::save_model(out_path, file);
        return 0;
    });
    return kOk;
}

int cmd_train(const Settings& s, const std::string& model) {
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    const fs::path out_path = s.model_out.empty() ? dir / (model + ".json") : fs::path(s.model_out);
    const fs::path log_path = dir / ("train_" + model + ".log");
    auto log = open_out(log_path);
    log << "model " << model << " seed " << s.seed << '\n';
    int rc = kOk;
    if (model == "tme") rc = train_tme(s, out_path, log);
    if (model == "garch") rc = train_garch(s, out_path, log);
    if (model == "gbm") rc = train_gbm(s, out_path, log);
    write_run_record(dir, "train_" + model, {{"model", model}, {"seed", s.seed}, {"dataset", dataset_dir(s).string()}},
                     {out_path, log_path});
    std::cerr << "train " << model << ": wrote " << out_path.string() << '\n';
    return rc;
}

// ------------------------------------------------------- predictions per model

struct ModelPredictions {
    std::string name;
    std::string type;
    evaluate::PredictionSet predictions;
    std::vector<std::vector<double>> gates;
    std::vector<io::ForecastRow> tme_rows;
    std::vector<double> mean_y, var_y;
};

const std::vector<preprocess::ModelInstance>& pick_split(const Prepared& p, const std::string& split) {
    if (split == "train") return p.train;
    if (split == "validation") return p.validation;
    if (split == "test") return p.test;
    throw Failure{kInput, "--split must be train, validation or test"};
}

void check_compatible(const io::ModelContext& c, const Prepared& p, const fs::path& model_path) {
    if (c.dataset_hash != p.loaded.config_hash) {
        throw Failure{kEvaluation, model_path.string() + " was trained on dataset " + c.dataset_hash +
                                       " but the dataset manifest has config hash " + p.loaded.config_hash};
    }
    if (!(c.shape == p.loaded.dataset.shape)) {
        throw Failure{kEvaluation, model_path.string() + " expects a different window shape than the dataset"};
    }
}

ModelPredictions predict_model(const fs::path& model_path, const fs::path& data_dir, const std::string& split) {
    ModelPredictions out;
    out.name = model_path.stem().string();
    out.type = stage(kInput, [&] { return io::model_type(model_path); });

    auto to_prediction = [](const preprocess::ModelInstance& inst) {
        evaluate::Prediction pr;
        pr.t = inst.t;
        pr.v_true = inst.v;
        pr.a = inst.a;
        return pr;
    };

    if (out.type == "tme") {
        auto file = stage(kInput, [&] { return io::load_tme(model_path); });
        auto p = prepare(data_dir, file.context.scaler);
        check_compatible(file.context, p, model_path);
        stage(kEvaluation, [&] {
            for (const auto& inst : pick_split(p, split)) {
                const auto fc = tme::predict(file.ensemble, inst);
                auto pr = to_prediction(inst);
                pr.v_hat = inst.a * fc.mean;
                pr.sd_y = std::sqrt(fc.var_total);
                pr.nll_y = tme::nll_point(file.ensemble, inst);
                out.predictions.push_back(pr);
                out.gates.push_back(fc.gate_probs);
                const auto v = preprocess::reseasonalize_mean_var(fc.mean, fc.var_total, inst.t, file.context.profile);
                out.tme_rows.push_back({inst.t, fc, v.mean, std::sqrt(v.var)});
            }
            return 0;
        });
    } else if (out.type == "garch") {
        auto file = stage(kInput, [&] { return io::load_garch(model_path); });
        auto p = prepare(data_dir, file.context.scaler);
        check_compatible(file.context, p, model_path);
        stage(kEvaluation, [&] {
            const auto rows = chain({&p.train, &p.validation, &p.test});
            const std::size_t start = split == "train" ? 0
                                      : split == "validation" ? p.train.size()
                                                              : p.train.size() + p.validation.size();
            const std::size_t stop = split == "train" ? p.train.size()
                                     : split == "validation" ? p.train.size() + p.validation.size()
                                                             : rows.size();
            pick_split(p, split);
            const auto y = log_series(rows);
            const Matrix x = lag1_features(rows);
            const auto steps =
                garch::rolling_forecasts(file.fit, y, file.fit.spec.use_exog ? &x : nullptr, start);
            for (std::size_t i = start; i < stop; ++i) {
                const auto& st = steps[i - start];
                const auto m = tme::lognormal_moments(st.mean_log, st.var_log);
                auto pr = to_prediction(*rows[i]);
                pr.v_hat = rows[i]->a * m.mean;
                pr.sd_y = std::sqrt(m.variance);
                pr.nll_y = -tme::lognormal_log_pdf(rows[i]->y, st.mean_log, st.var_log);
                out.predictions.push_back(pr);
                out.mean_y.push_back(m.mean);
                out.var_y.push_back(m.variance);
            }
            return 0;
        });
    } else {
        auto file = stage(kInput, [&] { return io::load_gbm(model_path); });
        auto p = prepare(data_dir, file.context.scaler);
        check_compatible(file.context, p, model_path);
        stage(kEvaluation, [&] {
            const auto& part = pick_split(p, split);
            const Matrix x = gbm::design_matrix(part);
            for (std::size_t i = 0; i < part.size(); ++i) {
                // Point forecast exp(u_hat + s^2 / 2) with s^2 the training residual variance.
                const double mean_y = std::exp(file.model.predict(x.row(i)) + 0.5 * file.model.residual_variance);
                auto pr = to_prediction(part[i]);
                pr.v_hat = part[i].a * mean_y;
                out.predictions.push_back(pr);
                out.mean_y.push_back(mean_y);
                out.var_y.push_back(std::nan(""));
            }
            return 0;
        });
    }
    return out;
}

int cmd_predict(const Settings& s) {
    if (s.models.size() != 1) throw Failure{kInput, "predict takes exactly one --model"};
    const fs::path model_path = s.models.front();
    const auto mp = predict_model(model_path, dataset_dir(s), s.split);
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    const fs::path path = dir / ("forecast_" + mp.name + ".csv");
    auto out = open_out(path);
    if (mp.type == "tme") {
        const std::size_t sources = mp.gates.empty() ? 0 : mp.gates.front().size();
        io::write_forecast_csv(out, mp.tme_rows, sources);
    } else {
        out << "t,mean_y,var_total_y,mean_v,sd_v\n";
        for (std::size_t i = 0; i < mp.predictions.size(); ++i) {
            const auto& pr = mp.predictions[i];
            out << pr.t << ',' << mp.mean_y[i] << ',';
            if (std::isnan(mp.var_y[i])) {
                out << "NA," << pr.v_hat << ",NA\n";
            } else {
                out << mp.var_y[i] << ',' << pr.v_hat << ',' << pr.a * std::sqrt(mp.var_y[i]) << '\n';
            }
        }
    }
    write_run_record(dir, "predict", {{"model", model_path.string()}, {"split", s.split}}, {path});
    std::cerr << "predict: " << mp.predictions.size() << " rows to " << path.string() << '\n';
    return kOk;
}

// ------------------------------------------------------------------ evaluate

int cmd_evaluate(const Settings& s) {
    if (s.models.empty()) throw Failure{kInput, "evaluate needs at least one --model"};
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    std::vector<ModelPredictions> all;
    for (const auto& m : s.models) all.push_back(predict_model(m, dataset_dir(s), s.split));

    std::vector<evaluate::NamedReport> reports;
    std::vector<fs::path> written;
    const fs::path metrics_path = dir / "metrics.csv";
    auto metrics = open_out(metrics_path);
    written.push_back(metrics_path);
    stage(kEvaluation, [&] {
        bool header = true;
        for (const auto& mp : all) {
            const auto rep = evaluate::report(mp.predictions);
            reports.push_back({mp.name, rep});
            std::optional<evaluate::QuartileReport> q;
            if (s.quartiles) q = evaluate::quartile_report(mp.predictions);
            std::ostringstream one;
            one.precision(17);
            evaluate::write_report_csv(one, mp.name, rep, q ? &*q : nullptr);
            std::string text = one.str();
            if (!header) text = text.substr(text.find('\n') + 1);
            metrics << text;
            header = false;

            std::cout << mp.name << " (" << mp.type << "): n=" << rep.n << " rmse=" << rep.rmse << " mae=" << rep.mae
                      << " nnll=" << (rep.nnll ? std::to_string(*rep.nnll) : "NA")
                      << " iw=" << (rep.iw ? std::to_string(*rep.iw) : "NA") << '\n';

            if (mp.predictions.front().sd_y) {
                const fs::path band_path = dir / ("band_" + mp.name + ".csv");
                auto band = open_out(band_path);
                evaluate::write_band_csv(band, mp.predictions, mp.gates);
                written.push_back(band_path);
            }
        }
        if (reports.size() > 1) {
            const auto rows = evaluate::compare(reports);
            const fs::path md = dir / "comparison.md", csv = dir / "comparison.csv";
            auto a = open_out(md);
            evaluate::write_comparison_markdown(a, reports, rows);
            auto b = open_out(csv);
            evaluate::write_comparison_csv(b, reports, rows);
            written.push_back(md);
            written.push_back(csv);
        }
        return 0;
    });
    json config = {{"models", s.models}, {"split", s.split}, {"quartiles", s.quartiles}};
    write_run_record(dir, "evaluate", config, written);
    return kOk;
}

// ------------------------------------------------------------------ simulate

int simulate_tme(const Settings& s) {
    const preprocess::WindowShape shape{{6, 13, 6, 13}, s.window_h};
    synthetic::TmeGenerativeSpec spec;
    spec.truth = synthetic::informative_source_truth(shape, derive_seed(s.seed, 1));
    spec.n = s.n;
    spec.seed = derive_seed(s.seed, 2);
    auto gen = stage(kInput, [&] { return synthetic::gen_tme_data(spec); });

    preprocess::Dataset ds;
    ds.config.horizon = preprocess::Horizon::OneMinute;
    ds.config.window_h = s.window_h;
    ds.config.split = {s.split_train, s.split_validation};
    ds.shape = shape;
    ds.profile.interval = 60;
    ds.profile.values.assign(static_cast<std::size_t>(preprocess::kSecondsPerDay / 60), 1.0);
    ds.profile.fitted_on = "synthetic";
    ds.total_instances = gen.instances.size();
    ds.split = stage(kInput, [&] { return preprocess::split_dataset(std::move(gen.instances), ds.config.split); });

    const json config = {{"simulate", "tme"}, {"n", s.n}, {"window_h", s.window_h}, {"seed", s.seed},
                         {"split", {s.split_train, s.split_validation}}};
    const auto dir = dataset_dir(s);
    stage(kInput, [&] {
        io::write_dataset(dir, ds, config_hash(config));
        return 0;
    });
    write_run_record(s.out_dir, "simulate_tme", config, {dir / io::kManifestJson, dir / io::kDatasetCsv});
    std::cerr << "simulate tme: " << s.n << " instances to " << dir.string() << '\n';
    return kOk;
}

int simulate_garch(const Settings& s) {
    synthetic::GarchSimSpec spec;
    spec.n = s.n;
    spec.seed = s.seed;
    const auto series = stage(kInput, [&] { return synthetic::gen_garch_series(spec); });
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    const fs::path path = dir / "garch_series.csv";
    auto out = open_out(path);
    out << "index,log_y\n";
    for (std::size_t i = 0; i < series.size(); ++i) out << i << ',' << series[i] << '\n';
    const json config = {{"simulate", "garch"}, {"n", s.n}, {"seed", s.seed},
                         {"omega", spec.omega}, {"alpha", spec.alpha}, {"beta", spec.beta}};
    write_run_record(dir, "simulate_garch", config, {path});
    return kOk;
}

int simulate_volume(const Settings& s) {
    const auto horizon = stage(kInput, [&] { return preprocess::parse_horizon(s.horizon); });
    synthetic::MarketLikeOptions opt;
    opt.zero_rate = s.zero_rate;
    if (s.days < 2) throw Failure{kInput, "--days must be at least 2"};
    const auto sim = stage(kInput, [&] { return synthetic::gen_market_like_volume(horizon, s.days, s.seed, opt); });
    const fs::path dir(s.out_dir);
    fs::create_directories(dir);
    const std::vector<std::pair<std::string, const std::vector<market_data::TradeRecord>*>> trades{
        {"target_trades.csv", &sim.target_trades}, {"external_trades.csv", &sim.external_trades}};
    const std::vector<std::pair<std::string, const std::vector<market_data::BookSnapshot>*>> books{
        {"target_book.csv", &sim.target_book}, {"external_book.csv", &sim.external_book}};
    std::vector<fs::path> written;
    for (const auto& [name, rows] : trades) {
        auto out = open_out(dir / name);
        market_data::write_trades(out, *rows);
        written.push_back(dir / name);
    }
    for (const auto& [name, rows] : books) {
        auto out = open_out(dir / name);
        market_data::write_book(out, *rows);
        written.push_back(dir / name);
    }
    auto vol = open_out(dir / "volume.csv");
    vol << "interval_start,volume,external_volume\n";
    for (std::size_t i = 0; i < sim.grid.size(); ++i) {
        vol << sim.grid[i] << ',' << sim.volume[i] << ',' << sim.external_volume[i] << '\n';
    }
    written.push_back(dir / "volume.csv");
    const json config = {{"simulate", "volume"}, {"days", s.days},           {"seed", s.seed},
                         {"horizon", s.horizon}, {"zero_rate", s.zero_rate}};
    write_run_record(dir, "simulate_volume", config, written);
    std::cerr << "simulate volume: " << sim.grid.size() << " intervals to " << dir.string() << '\n';
    return kOk;
}

// --------------------------------------------------------------------- repro

int cmd_repro(const Settings& s, bool seed_given) {
    acceptance::Options o;
    o.fast = s.fast;
    o.log = &std::cerr;
    if (seed_given) o.seed = s.seed;
    for (const auto& c : s.criteria) {
        stage(kInput, [&] { return acceptance::criterion_id(c); });
        o.only.push_back(c);
    }
    const auto results = acceptance::run(o);
    std::vector<std::string> failed;
    for (const auto& r : results) {
        std::cout << acceptance::format_line(r) << std::endl;
        if (!r.passed) failed.push_back(r.name);
    }
    if (failed.empty()) {
        std::cout << "all criteria passed" << (s.fast ? " (fast mode)" : "") << std::endl;
        return kOk;
    }
    std::cout << "failed:";
    for (const auto& f : failed) std::cout << ' ' << f;
    std::cout << std::endl;
    return kAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    Settings s;
    try {
        if (const auto path = find_config_path(argc, argv)) {
            std::ifstream in(*path);
            if (!in) throw Failure{kInput, "cannot open config " + *path};
            try {
                apply_config(json::parse(in), s);
            } catch (const json::exception& e) {
                throw Failure{kInput, "config " + *path + ": " + e.what()};
            }
        }
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    }

    CLI::App app{"Probabilistic intraday volume forecasting"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with default settings");
    auto* seed_opt = app.add_option("--seed", s.seed, "Root seed");
    app.add_option("--horizon", s.horizon, "Interval length: 1m, 5m or 10m");
    app.add_option("--out-dir", s.out_dir, "Output directory");
    app.add_flag("--ts-ms", s.ts_ms, "Input timestamps are milliseconds");

    auto* features = app.add_subcommand("features", "Extract per-interval features from trades and books");
    features->add_option("--target-trades", s.target_trades)->required()->check(CLI::ExistingFile);
    features->add_option("--target-book", s.target_book)->required()->check(CLI::ExistingFile);
    features->add_option("--external-trades", s.external_trades)->required()->check(CLI::ExistingFile);
    features->add_option("--external-book", s.external_book)->required()->check(CLI::ExistingFile);

    auto* dataset = app.add_subcommand("dataset", "Build the windowed, deseasonalized dataset");
    dataset->add_option("--features-dir", s.features_dir, "Directory with the feature CSVs (default: out-dir)");
    dataset->add_option("--window-h", s.window_h, "Lag window length");
    dataset->add_option("--split-train", s.split_train);
    dataset->add_option("--split-validation", s.split_validation);
    dataset->add_option("--dataset", s.dataset, "Dataset directory to write (default: out-dir/dataset)");

    auto* train = app.add_subcommand("train", "Train a model");
    std::string model_kind;
    train->add_option("model", model_kind)->required()->check(CLI::IsMember({"tme", "garch", "gbm"}));
    train->add_option("--dataset", s.dataset);
    train->add_option("--out", s.model_out, "Model file (default: out-dir/<model>.json)");
    train->add_option("--lr", s.tme.learning_rate);
    train->add_option("--batch", s.tme.batch_size);
    train->add_option("--lambda", s.tme.l2_lambda);
    train->add_option("--trajectories", s.tme.n_trajectories);
    train->add_option("--epochs", s.tme.max_epochs);
    train->add_option("--burn-in", s.tme.burn_in_epochs);
    train->add_option("--members", s.tme.ensemble_size);
    bool no_bias_reg = false;
    train->add_flag("--no-bias-reg", no_bias_reg, "Leave bias terms out of the L2 prior");
    train->add_option("--p-range", s.p_range, "AR orders lo:hi");
    train->add_option("--q-range", s.q_range, "MA orders lo:hi");
    train->add_option("--exog", s.exog, "on|off")->check(CLI::IsMember({"on", "off"}));
    train->add_option("--acf-lags", s.acf_lags);
    train->add_option("--n-draws", s.n_draws, "Random-search draws");
    train->add_option("--n-trees-min", s.gbm.n_trees_min);
    train->add_option("--n-trees-max", s.gbm.n_trees_max);
    train->add_option("--max-features-min", s.gbm.max_features_min);
    train->add_option("--max-features-max", s.gbm.max_features_max);
    train->add_option("--min-leaf-min", s.gbm.min_leaf_min);
    train->add_option("--min-leaf-max", s.gbm.min_leaf_max);
    train->add_option("--depth-min", s.gbm.depth_min);
    train->add_option("--depth-max", s.gbm.depth_max);
    train->add_option("--gbm-lr-min", s.gbm.lr_min);
    train->add_option("--gbm-lr-max", s.gbm.lr_max);

    auto* predict = app.add_subcommand("predict", "Write forecasts of one model");
    predict->add_option("--model", s.models)->required()->check(CLI::ExistingFile);
    predict->add_option("--dataset", s.dataset);
    predict->add_option("--split", s.split)->check(CLI::IsMember({"train", "validation", "test"}));

    auto* evaluate = app.add_subcommand("evaluate", "Score models on a dataset split");
    evaluate->add_option("--model", s.models)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--dataset", s.dataset);
    evaluate->add_option("--split", s.split)->check(CLI::IsMember({"train", "validation", "test"}));
    evaluate->add_flag("--quartiles", s.quartiles, "Add volume-quartile rows");

    auto* simulate = app.add_subcommand("simulate", "Generate synthetic data");
    std::string sim_kind;
    simulate->add_option("kind", sim_kind)->required()->check(CLI::IsMember({"tme", "garch", "volume"}));
    simulate->add_option("--n", s.n, "Instances (tme) or observations (garch)");
    simulate->add_option("--days", s.days, "Days of volume");
    simulate->add_option("--window-h", s.window_h);
    simulate->add_option("--zero-rate", s.zero_rate);
    simulate->add_option("--dataset", s.dataset);
    simulate->add_option("--out", s.out_dir, "Same as --out-dir");

    auto* repro = app.add_subcommand("repro", "Run the acceptance suite on synthetic data");
    repro->add_flag("--fast", s.fast, "Smaller samples");
    repro->add_option("--criterion", s.criteria, "Name or number; repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kInput;
    }
    if (no_bias_reg) s.tme.regularize_bias = false;

    try {
        if (*features) return cmd_features(s);
        if (*dataset) return cmd_dataset(s);
        if (*train) return cmd_train(s, model_kind);
        if (*predict) return cmd_predict(s);
        if (*evaluate) return cmd_evaluate(s);
        if (*simulate) {
            if (sim_kind == "tme") return simulate_tme(s);
            if (sim_kind == "garch") return simulate_garch(s);
            return simulate_volume(s);
        }
        if (*repro) return cmd_repro(s, seed_opt->count() > 0);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kOk;
}
