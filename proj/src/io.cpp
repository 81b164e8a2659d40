#include "volmix/io.hpp"

#include "volmix/csv.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace volmix::io {

using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRow, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json profile_json(const preprocess::SeasonalProfile& p) {
    return {{"interval", p.interval}, {"fitted_on", p.fitted_on}, {"values", p.values}};
}

preprocess::SeasonalProfile profile_from(const json& j) {
    preprocess::SeasonalProfile p;
    p.interval = j.at("interval").get<Epoch>();
    p.fitted_on = j.at("fitted_on").get<std::string>();
    p.values = j.at("values").get<std::vector<double>>();
    return p;
}

json context_json(const ModelContext& c) {
    return {{"horizon", preprocess::to_string(c.horizon)},
            {"window_h", c.shape.h},
            {"dims", c.shape.dims},
            {"profile", profile_json(c.profile)},
            {"scaler", {{"mean", c.scaler.mean}, {"scale", c.scaler.scale}}},
            {"dataset_hash", c.dataset_hash},
            {"config_hash", c.config_hash},
            {"seed", c.seed}};
}

ModelContext context_from(const json& j) {
    ModelContext c;
    c.horizon = preprocess::parse_horizon(j.at("horizon").get<std::string>());
    c.shape.h = j.at("window_h").get<std::size_t>();
    c.shape.dims = j.at("dims").get<std::vector<std::size_t>>();
    c.profile = profile_from(j.at("profile"));
    c.scaler.mean = j.at("scaler").at("mean").get<std::vector<std::vector<double>>>();
    c.scaler.scale = j.at("scaler").at("scale").get<std::vector<std::vector<double>>>();
    c.dataset_hash = j.at("dataset_hash").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

template <typename F>
auto guarded(const fs::path& path, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRow, path.string() + ": " + e.what());
    }
}

}  // namespace

void write_instances_csv(std::ostream& out, const std::vector<preprocess::ModelInstance>& instances) {
    out << "t,v,a,y,src,lag,f_index,value\n";
    for (const auto& inst : instances) {
        const std::string head = std::to_string(inst.t) + ',' + csv::format_double(inst.v) + ',' +
                                 csv::format_double(inst.a) + ',' + csv::format_double(inst.y) + ',';
        for (std::size_t s = 0; s < inst.windows.size(); ++s) {
            const Matrix& w = inst.windows[s];
            for (std::size_t j = 0; j < w.cols(); ++j) {
                const std::size_t lag = w.cols() - j;
                for (std::size_t f = 0; f < w.rows(); ++f) {
                    out << head << s + 1 << ',' << lag << ',' << f + 1 << ',' << csv::format_double(w(f, j)) << '\n';
                }
            }
        }
    }
}

std::vector<preprocess::ModelInstance> read_instances_csv(std::istream& in, const preprocess::WindowShape& shape) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "dataset file is empty");
    std::vector<preprocess::ModelInstance> out;
    std::size_t row = 0, filled = 0;
    const std::size_t per_instance = shape.flat_size();
    while (std::getline(in, line)) {
        ++row;
        if (csv::trim(line).empty()) continue;
        const auto cells = csv::split(csv::trim(line));
        if (cells.size() != 8) throw Error(Errc::MalformedRow, "expected 8 columns", row);
        const auto t = csv::parse_int(cells[0]);
        const auto v = csv::parse_double(cells[1]), a = csv::parse_double(cells[2]), y = csv::parse_double(cells[3]);
        const auto src = csv::parse_int(cells[4]), lag = csv::parse_int(cells[5]), f = csv::parse_int(cells[6]);
        const auto value = csv::parse_double(cells[7]);
        if (!t || !v || !a || !y || !src || !lag || !f || !value) throw Error(Errc::MalformedRow, "unparsable cell", row);
        if (*src < 1 || static_cast<std::size_t>(*src) > shape.sources() || *lag < 1 ||
            static_cast<std::size_t>(*lag) > shape.h || *f < 1 ||
            static_cast<std::size_t>(*f) > shape.dims[static_cast<std::size_t>(*src - 1)]) {
            throw Error(Errc::MalformedRow, "index outside the manifest shape", row);
        }
        if (out.empty() || out.back().t != *t) {
            if (!out.empty() && filled != per_instance) throw Error(Errc::MalformedRow, "incomplete instance", row);
            preprocess::ModelInstance inst;
            inst.t = *t;
            inst.v = *v;
            inst.a = *a;
            inst.y = *y;
            for (auto d : shape.dims) inst.windows.emplace_back(d, shape.h);
            out.push_back(std::move(inst));
            filled = 0;
        }
        const auto s = static_cast<std::size_t>(*src - 1);
        out.back().windows[s](static_cast<std::size_t>(*f - 1), shape.h - static_cast<std::size_t>(*lag)) = *value;
        ++filled;
    }
    if (!out.empty() && filled != per_instance) throw Error(Errc::MalformedRow, "incomplete final instance", row);
    return out;
}

void write_dataset(const fs::path& dir, const preprocess::Dataset& ds, const std::string& config_hash) {
    fs::create_directories(dir);
    const auto& sp = ds.split;
    json manifest = {
        {"format", "volmix-dataset"},
        {"version", 1},
        {"horizon", preprocess::to_string(ds.config.horizon)},
        {"window_h", ds.shape.h},
        {"sources", ds.shape.sources()},
        {"dims", ds.shape.dims},
        {"split",
         {{"train_fraction", ds.config.split.train},
          {"validation_fraction", ds.config.split.validation},
          {"n_train", sp.train.size()},
          {"n_validation", sp.validation.size()},
          {"n_test", sp.test.size()},
          {"train_last_t", sp.train.empty() ? 0 : sp.train.back().t},
          {"validation_last_t", sp.validation.empty() ? 0 : sp.validation.back().t}}},
        {"profile", profile_json(ds.profile)},
        {"dropped_fraction", ds.dropped_fraction},
        {"total_instances", ds.total_instances},
        {"config_hash", config_hash},
    };
    write_json(dir / kManifestJson, manifest);
    std::ofstream out(dir / kDatasetCsv);
    if (!out) throw Error(Errc::Io, "cannot write " + (dir / kDatasetCsv).string());
    std::vector<preprocess::ModelInstance> all;
    all.reserve(ds.total_instances);
    for (const auto* part : {&sp.train, &sp.validation, &sp.test}) all.insert(all.end(), part->begin(), part->end());
    write_instances_csv(out, all);
}

LoadedDataset read_dataset(const fs::path& dir) {
    const json m = read_json(dir / kManifestJson);
    LoadedDataset out;
    auto& ds = out.dataset;
    std::size_t n_train = 0, n_valid = 0, n_test = 0;
    guarded(dir / kManifestJson, [&] {
        ds.config.horizon = preprocess::parse_horizon(m.at("horizon").get<std::string>());
        ds.config.window_h = m.at("window_h").get<std::size_t>();
        ds.config.split.train = m.at("split").at("train_fraction").get<double>();
        ds.config.split.validation = m.at("split").at("validation_fraction").get<double>();
        ds.shape.h = ds.config.window_h;
        ds.shape.dims = m.at("dims").get<std::vector<std::size_t>>();
        ds.profile = profile_from(m.at("profile"));
        ds.dropped_fraction = m.at("dropped_fraction").get<double>();
        ds.total_instances = m.at("total_instances").get<std::size_t>();
        n_train = m.at("split").at("n_train").get<std::size_t>();
        n_valid = m.at("split").at("n_validation").get<std::size_t>();
        n_test = m.at("split").at("n_test").get<std::size_t>();
        out.config_hash = m.at("config_hash").get<std::string>();
        return 0;
    });
    std::ifstream in(dir / kDatasetCsv);
    if (!in) throw Error(Errc::Io, "cannot open " + (dir / kDatasetCsv).string());
    auto all = read_instances_csv(in, ds.shape);
    if (all.size() != n_train + n_valid + n_test) {
        throw Error(Errc::ShapeMismatch, "dataset row count does not match the manifest split");
    }
    auto it = std::make_move_iterator(all.begin());
    ds.split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    ds.split.validation.assign(it + static_cast<std::ptrdiff_t>(n_train),
                               it + static_cast<std::ptrdiff_t>(n_train + n_valid));
    ds.split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_valid), std::make_move_iterator(all.end()));
    return out;
}

void save_model(const fs::path& path, const TmeModelFile& model) {
    const auto& c = model.config;
    json members = json::array();
    for (std::size_t m = 0; m < model.ensemble.size(); ++m) {
        const auto& prov = model.ensemble.provenance[m];
        const auto values = model.ensemble.members[m].values();
        members.push_back({{"trajectory", prov.trajectory},
                           {"epoch", prov.epoch},
                           {"seed", prov.seed},
                           {"params", std::vector<double>(values.begin(), values.end())}});
    }
    json j = {
        {"type", "tme"},
        {"version", 1},
        {"context", context_json(model.context)},
        {"field_order", "per source: L_mu, R_mu, b_mu, L_sigma, R_sigma, b_sigma; then per source: L_z, R_z, b_z"},
        {"train_config",
         {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"l2_lambda", c.l2_lambda},
          {"regularize_bias", c.regularize_bias},
          {"n_trajectories", c.n_trajectories},
          {"burn_in_epochs", c.burn_in_epochs},
          {"max_epochs", c.max_epochs},
          {"ensemble_size", c.ensemble_size},
          {"convergence_tol", c.convergence_tol},
          {"seed", c.seed}}},
        {"members", members},
    };
    write_json(path, j);
}

void save_model(const fs::path& path, const GarchModelFile& model) {
    json table = json::array();
    for (const auto& r : model.aic_table) {
        table.push_back({{"p", r.p}, {"q", r.q}, {"ok", r.ok}, {"loglik", r.loglik}, {"aic", r.aic}, {"error", r.error}});
    }
    json j = json::parse(garch_report_json(model.fit));
    j["type"] = "garch";
    j["version"] = 1;
    j["context"] = context_json(model.context);
    j["aic_table"] = table;
    write_json(path, j);
}

namespace {

json tree_json(const gbm::Tree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
        if (n.is_leaf()) {
            nodes.push_back({{"kind", "leaf"}, {"value", n.value}});
        } else {
            nodes.push_back({{"kind", "split"}, {"feature", n.feature}, {"threshold", n.threshold}});
        }
    }
    return nodes;
}

gbm::Tree tree_from(const json& nodes) {
    gbm::Tree tree;
    std::size_t pos = 0;
    // Preorder: a split node is followed by its whole left subtree, then its right subtree.
    std::function<int()> parse = [&]() -> int {
        if (pos >= nodes.size()) throw Error(Errc::MalformedRow, "truncated tree");
        const json& n = nodes[pos++];
        const auto id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const auto kind = n.at("kind").get<std::string>();
        if (kind == "leaf") {
            tree.nodes.back().value = n.at("value").get<double>();
            return id;
        }
        if (kind != "split") throw Error(Errc::MalformedRow, "unknown tree node kind " + kind);
        const int feature = n.at("feature").get<int>();
        const double threshold = n.at("threshold").get<double>();
        const int l = parse();
        const int r = parse();
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = feature;
        node.threshold = threshold;
        node.left = l;
        node.right = r;
        return id;
    };
    parse();
    if (pos != nodes.size()) throw Error(Errc::MalformedRow, "trailing tree nodes");
    return tree;
}

json hyper_json(const gbm::HyperParams& h) {
    return {{"n_trees", h.n_trees},     {"max_features_frac", h.max_features_frac},
            {"min_samples_leaf", h.min_samples_leaf}, {"max_depth", h.max_depth},
            {"learning_rate", h.learning_rate}, {"seed", h.seed}};
}

gbm::HyperParams hyper_from(const json& j) {
    gbm::HyperParams h;
    h.n_trees = j.at("n_trees").get<std::size_t>();
    h.max_features_frac = j.at("max_features_frac").get<double>();
    h.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    h.max_depth = j.at("max_depth").get<std::size_t>();
    h.learning_rate = j.at("learning_rate").get<double>();
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
}

}  // namespace

std::string tree_to_json(const gbm::Tree& tree) { return tree_json(tree).dump(); }

gbm::Tree tree_from_json(const std::string& text) {
    try {
        return tree_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRow, e.what());
    }
}

void save_model(const fs::path& path, const GbmModelFile& model) {
    const auto& m = model.model;
    json trees = json::array();
    for (std::size_t k = 0; k < m.trees.size(); ++k) trees.push_back({{"scale", m.scales[k]}, {"nodes", tree_json(m.trees[k])}});
    json table = json::array();
    for (const auto& r : model.search_table) table.push_back({{"hyper", hyper_json(r.hyper)}, {"validation_rmse", r.validation_rmse}});
    json j = {{"type", "gbm"},
              {"version", 1},
              {"context", context_json(model.context)},
              {"init_value", m.init_value},
              {"learning_rate", m.learning_rate},
              {"n_features", m.n_features},
              {"residual_variance", m.residual_variance},
              {"hyper", hyper_json(m.hyper)},
              {"train_sse", m.train_sse},
              {"search_table", table},
              {"trees", trees}};
    write_json(path, j);
}

std::string model_type(const fs::path& path) {
    const json j = read_json(path);
    return guarded(path, [&] { return j.at("type").get<std::string>(); });
}

TmeModelFile load_tme(const fs::path& path) {
    const json j = read_json(path);
    return guarded(path, [&] {
        if (j.at("type") != "tme") throw Error(Errc::InvalidArgument, path.string() + " is not a TME model");
        TmeModelFile f;
        f.context = context_from(j.at("context"));
        const json& c = j.at("train_config");
        f.config.learning_rate = c.at("learning_rate").get<double>();
        f.config.batch_size = c.at("batch_size").get<std::size_t>();
        f.config.l2_lambda = c.at("l2_lambda").get<double>();
        f.config.regularize_bias = c.at("regularize_bias").get<bool>();
        f.config.n_trajectories = c.at("n_trajectories").get<std::size_t>();
        f.config.burn_in_epochs = c.at("burn_in_epochs").get<std::size_t>();
        f.config.max_epochs = c.at("max_epochs").get<std::size_t>();
        f.config.ensemble_size = c.at("ensemble_size").get<std::size_t>();
        f.config.convergence_tol = c.at("convergence_tol").get<double>();
        f.config.seed = c.at("seed").get<std::uint64_t>();
        for (const auto& m : j.at("members")) {
            tme::TmeParams p(f.context.shape);
            const auto values = m.at("params").get<std::vector<double>>();
            if (values.size() != p.size()) throw Error(Errc::ShapeMismatch, "member parameter count does not match shape");
            std::copy(values.begin(), values.end(), p.values().begin());
            f.ensemble.members.push_back(std::move(p));
            f.ensemble.provenance.push_back({m.at("trajectory").get<std::size_t>(), m.at("epoch").get<std::size_t>(),
                                             m.at("seed").get<std::uint64_t>()});
        }
        if (f.ensemble.members.empty()) throw Error(Errc::MalformedRow, "TME model has no members");
        return f;
    });
}

GarchModelFile load_garch(const fs::path& path) {
    const json j = read_json(path);
    return guarded(path, [&] {
        if (j.at("type") != "garch") throw Error(Errc::InvalidArgument, path.string() + " is not a GARCH model");
        GarchModelFile f;
        f.context = context_from(j.at("context"));
        auto& fit = f.fit;
        const json& s = j.at("spec");
        fit.spec.p = s.at("p").get<int>();
        fit.spec.q = s.at("q").get<int>();
        fit.spec.use_exog = s.at("use_exog").get<bool>();
        fit.spec.exog_dim = s.at("exog_dim").get<std::size_t>();
        fit.mu = j.at("mu").get<double>();
        fit.phi = j.at("phi").get<std::vector<double>>();
        fit.theta = j.at("theta").get<std::vector<double>>();
        fit.psi = j.at("psi").get<std::vector<double>>();
        const json& g = j.at("garch");
        fit.garch.omega = g.at("omega").get<double>();
        fit.garch.alpha = g.at("alpha").get<double>();
        fit.garch.beta = g.at("beta").get<double>();
        fit.garch.se_omega = g.at("se_omega").get<double>();
        fit.garch.se_alpha = g.at("se_alpha").get<double>();
        fit.garch.se_beta = g.at("se_beta").get<double>();
        fit.series_mean = j.at("series_mean").get<double>();
        fit.exog_mean = j.at("exog_mean").get<std::vector<double>>();
        fit.sigma2_0 = j.at("sigma2_0").get<double>();
        fit.css = j.at("css").get<double>();
        fit.loglik = j.at("loglik").get<double>();
        fit.aic = j.at("aic").get<double>();
        fit.optimizer = j.at("optimizer").get<std::string>();
        for (const auto& r : j.at("aic_table")) {
            f.aic_table.push_back({r.at("p").get<int>(), r.at("q").get<int>(), r.at("ok").get<bool>(),
                                   r.at("loglik").get<double>(), r.at("aic").get<double>(),
                                   r.at("error").get<std::string>()});
        }
        return f;
    });
}

GbmModelFile load_gbm(const fs::path& path) {
    const json j = read_json(path);
    return guarded(path, [&] {
        if (j.at("type") != "gbm") throw Error(Errc::InvalidArgument, path.string() + " is not a GBM model");
        GbmModelFile f;
        f.context = context_from(j.at("context"));
        auto& m = f.model;
        m.init_value = j.at("init_value").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        m.n_features = j.at("n_features").get<std::size_t>();
        m.residual_variance = j.at("residual_variance").get<double>();
        m.hyper = hyper_from(j.at("hyper"));
        m.train_sse = j.at("train_sse").get<std::vector<double>>();
        for (const auto& t : j.at("trees")) {
            m.scales.push_back(t.at("scale").get<double>());
            m.trees.push_back(tree_from(t.at("nodes")));
        }
        for (const auto& r : j.at("search_table")) {
            f.search_table.push_back({hyper_from(r.at("hyper")), r.at("validation_rmse").get<double>()});
        }
        return f;
    });
}

std::string garch_report_json(const garch::FittedArmaxGarch& fit) {
    const auto& g = fit.garch;
    json j = {
        {"spec", {{"p", fit.spec.p}, {"q", fit.spec.q}, {"use_exog", fit.spec.use_exog}, {"exog_dim", fit.spec.exog_dim}}},
        {"mu", fit.mu},
        {"phi", fit.phi},
        {"theta", fit.theta},
        {"psi", fit.psi},
        {"garch",
         {{"omega", g.omega},
          {"alpha", g.alpha},
          {"beta", g.beta},
          {"se_omega", g.se_omega},
          {"se_alpha", g.se_alpha},
          {"se_beta", g.se_beta},
          {"p_omega", garch::two_sided_p_value(g.omega, g.se_omega)},
          {"p_alpha", garch::two_sided_p_value(g.alpha, g.se_alpha)},
          {"p_beta", garch::two_sided_p_value(g.beta, g.se_beta)}}},
        {"series_mean", fit.series_mean},
        {"exog_mean", fit.exog_mean},
        {"sigma2_0", fit.sigma2_0},
        {"css", fit.css},
        {"loglik", fit.loglik},
        {"aic", fit.aic},
        {"optimizer", fit.optimizer},
    };
    // NaN p-values (zero standard errors) are not valid JSON numbers.
    for (auto& [k, v] : j["garch"].items()) {
        if (v.is_number_float() && !std::isfinite(v.get<double>())) v = nullptr;
    }
    return j.dump();
}

void write_acf_csv(std::ostream& out, const garch::Acf& acf) {
    out << "lag,acf,band\n";
    for (std::size_t k = 0; k < acf.values.size(); ++k) {
        out << k + 1 << ',' << csv::format_double(acf.values[k]) << ',' << csv::format_double(acf.band) << '\n';
    }
}

void write_forecast_csv(std::ostream& out, const std::vector<ForecastRow>& rows, std::size_t sources) {
    out << "t,mean_y,var_total_y,var_aleatoric_y,var_epistemic_y";
    for (std::size_t s = 0; s < sources; ++s) out << ",gate_" << s + 1;
    out << ",mean_v,sd_v\n";
    for (const auto& r : rows) {
        const auto& f = r.forecast;
        out << r.t << ',' << csv::format_double(f.mean) << ',' << csv::format_double(f.var_total) << ','
            << csv::format_double(f.var_aleatoric) << ',' << csv::format_double(f.var_epistemic);
        for (std::size_t s = 0; s < sources; ++s) {
            out << ',' << (s < f.gate_probs.size() ? csv::format_double(f.gate_probs[s]) : std::string{});
        }
        out << ',' << csv::format_double(r.mean_v) << ',' << csv::format_double(r.sd_v) << '\n';
    }
}

}  // namespace volmix::io
