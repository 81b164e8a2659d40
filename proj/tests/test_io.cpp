#include "volmix/io.hpp"
#include "volmix/synthetic.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace volmix;
using namespace volmix::io;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("volmix_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

preprocess::Dataset small_dataset() {
    synthetic::MarketLikeOptions o;
    o.zero_rate = 0.0;
    const auto g = synthetic::gen_market_like_volume(preprocess::Horizon::TenMinutes, 2, 3, o);
    using market_data::Market;
    std::vector<std::vector<market_data::FeatureVector>> src;
    src.push_back(market_data::compute_trade_features(g.target_trades, Market::Target, 600, g.grid));
    src.push_back(market_data::compute_book_features_on_grid(g.target_book, Market::Target, g.grid, 600));
    src.push_back(market_data::compute_trade_features(g.external_trades, Market::External, 600, g.grid));
    src.push_back(market_data::compute_book_features_on_grid(g.external_book, Market::External, g.grid, 600));
    preprocess::DatasetConfig c;
    c.horizon = preprocess::Horizon::TenMinutes;
    c.window_h = 3;
    return preprocess::build_dataset(g.grid, src, preprocess::target_volume(src[0]), c);
}

ModelContext context_for(const preprocess::Dataset& ds) {
    ModelContext c;
    c.horizon = ds.config.horizon;
    c.shape = ds.shape;
    c.profile = ds.profile;
    c.scaler = preprocess::fit_scaler(ds.split.train);
    c.dataset_hash = "abc123";
    c.config_hash = "def456";
    c.seed = 7;
    return c;
}

}  // namespace

TEST(Dataset, RoundTrip) {
    TempDir dir;
    const auto ds = small_dataset();
    write_dataset(dir.path, ds, "cafe");
    EXPECT_TRUE(fs::exists(dir.path / kDatasetCsv));
    EXPECT_TRUE(fs::exists(dir.path / kManifestJson));
    const auto back = read_dataset(dir.path);
    EXPECT_EQ(back.config_hash, "cafe");
    EXPECT_EQ(back.dataset.shape, ds.shape);
    EXPECT_EQ(back.dataset.profile.values, ds.profile.values);
    ASSERT_EQ(back.dataset.split.train.size(), ds.split.train.size());
    ASSERT_EQ(back.dataset.split.test.size(), ds.split.test.size());
    for (std::size_t i = 0; i < ds.split.test.size(); ++i) {
        const auto& a = ds.split.test[i];
        const auto& b = back.dataset.split.test[i];
        EXPECT_EQ(a.t, b.t);
        EXPECT_EQ(a.v, b.v);
        EXPECT_EQ(a.y, b.y);
        EXPECT_EQ(a.windows, b.windows);
    }
}

TEST(Dataset, MissingDirectory) {
    try {
        (void)read_dataset("/nonexistent/volmix/dataset");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Io);
    }
}

TEST(Instances, LongFormLayout) {
    preprocess::ModelInstance inst;
    inst.t = 120;
    inst.v = 4.0;
    inst.a = 2.0;
    inst.y = 2.0;
    Matrix w(1, 2);
    w(0, 0) = 10.0;  // t - 2 steps
    w(0, 1) = 11.0;  // t - 1 step
    inst.windows = {w};
    std::stringstream io;
    write_instances_csv(io, {inst});
    const auto text = io.str();
    EXPECT_EQ(text.rfind("t,v,a,y,src,lag,f_index,value\n", 0), 0u);
    EXPECT_NE(text.find("120,4,2,2,1,1,1,11"), std::string::npos);
    EXPECT_NE(text.find("120,4,2,2,1,2,1,10"), std::string::npos);
    const auto back = read_instances_csv(io, preprocess::WindowShape{{1}, 2});
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].windows, inst.windows);
}

TEST(Models, TmeRoundTrip) {
    TempDir dir;
    const auto ds = small_dataset();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.1);
    TmeModelFile m;
    m.context = context_for(ds);
    m.config.seed = 11;
    for (int k = 0; k < 2; ++k) {
        tme::TmeParams p(ds.shape);
        for (double& x : p.values()) x = n(rng);
        m.ensemble.members.push_back(p);
        m.ensemble.provenance.push_back({static_cast<std::size_t>(k), 3, 99});
    }
    const auto path = dir.path / "tme.json";
    save_model(path, m);
    EXPECT_EQ(model_type(path), "tme");
    const auto back = load_tme(path);
    EXPECT_EQ(back.ensemble.members, m.ensemble.members);
    EXPECT_EQ(back.ensemble.provenance[1].trajectory, 1u);
    EXPECT_EQ(back.context.scaler.mean, m.context.scaler.mean);
    EXPECT_EQ(back.context.dataset_hash, "abc123");
    EXPECT_EQ(back.config.seed, 11u);
}

TEST(Models, GarchRoundTrip) {
    TempDir dir;
    const auto ds = small_dataset();
    garch::FittedArmaxGarch f;
    f.spec = {2, 1, true, 3};
    f.mu = 0.3;
    f.phi = {0.2, -0.1};
    f.theta = {0.4};
    f.psi = {0.01, 0.02, 0.03};
    f.garch = {0.1, 0.05, 0.9, 0.01, 0.002, 0.003};
    f.series_mean = -1.2;
    f.exog_mean = {1, 2, 3};
    f.sigma2_0 = 0.7;
    GarchModelFile m{context_for(ds), f, {{2, 1, true, -10.0, 30.0, ""}}};
    const auto path = dir.path / "garch.json";
    save_model(path, m);
    EXPECT_EQ(model_type(path), "garch");
    const auto back = load_garch(path);
    EXPECT_EQ(back.fit.phi, f.phi);
    EXPECT_EQ(back.fit.psi, f.psi);
    EXPECT_EQ(back.fit.garch.beta, 0.9);
    EXPECT_EQ(back.fit.spec.exog_dim, 3u);
    EXPECT_EQ(back.aic_table.size(), 1u);
    const auto report = garch_report_json(f);
    EXPECT_NE(report.find("\"p_alpha\""), std::string::npos);
}

TEST(Models, GbmRoundTrip) {
    TempDir dir;
    const auto ds = small_dataset();
    gbm::GbmModel g;
    g.init_value = -1.0;
    g.learning_rate = 0.1;
    g.trees.push_back({{{0, 0.5, 1, 2, 0.0}, {-1, 0, -1, -1, -0.3}, {-1, 0, -1, -1, 0.4}}});
    g.scales = {1.0};
    g.n_features = 3;
    g.residual_variance = 0.25;
    GbmModelFile m{context_for(ds), g, {}};
    const auto path = dir.path / "gbm.json";
    save_model(path, m);
    const auto back = load_gbm(path);
    EXPECT_EQ(back.model.trees, g.trees);
    EXPECT_EQ(back.model.residual_variance, 0.25);
    EXPECT_EQ(gbm::Tree(io::tree_from_json(io::tree_to_json(g.trees[0]))), g.trees[0]);
}

TEST(Models, UnreadableFile) {
    TempDir dir;
    const auto path = dir.path / "bad.json";
    std::ofstream(path) << "{not json";
    EXPECT_THROW((void)model_type(path), Error);
    EXPECT_THROW((void)model_type(dir.path / "missing.json"), Error);
}

TEST(Forecast, CsvHeader) {
    ForecastRow r;
    r.t = 60;
    r.forecast.mean = 1.5;
    r.forecast.var_total = 0.5;
    r.forecast.var_aleatoric = 0.3;
    r.forecast.var_epistemic = 0.2;
    r.forecast.gate_probs = {0.25, 0.75};
    r.mean_v = 3.0;
    r.sd_v = 1.0;
    std::ostringstream out;
    write_forecast_csv(out, {r}, 2);
    EXPECT_EQ(out.str(),
              "t,mean_y,var_total_y,var_aleatoric_y,var_epistemic_y,gate_1,gate_2,mean_v,sd_v\n"
              "60,1.5,0.5,0.3,0.2,0.25,0.75,3,1\n");
}

TEST(Acf, CsvLayout) {
    std::ostringstream out;
    write_acf_csv(out, {{0.1, -0.05}, 0.0196});
    EXPECT_EQ(out.str(), "lag,acf,band\n1,0.1,0.0196\n2,-0.05,0.0196\n");
}
