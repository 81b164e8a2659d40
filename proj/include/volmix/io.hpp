#pragma once

// On-disk formats: dataset directory (long-form CSV plus JSON manifest) and
// JSON model files for the three model families.

#include "volmix/garch.hpp"
#include "volmix/gbm.hpp"
#include "volmix/preprocess.hpp"
#include "volmix/tme.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace volmix::io {

namespace fs = std::filesystem;

inline constexpr const char* kDatasetCsv = "dataset.csv";
inline constexpr const char* kManifestJson = "manifest.json";

/// Writes dataset.csv (t,v,a,y,src,lag,f_index,value; src and f_index
/// 1-based, lag k is the interval k steps before t) and manifest.json into `dir`.
void write_dataset(const fs::path& dir, const preprocess::Dataset& dataset, const std::string& config_hash);

struct LoadedDataset {
    preprocess::Dataset dataset;
    std::string config_hash;
};

[[nodiscard]] LoadedDataset read_dataset(const fs::path& dir);

/// Long-form instance rows, in the order given.
void write_instances_csv(std::ostream& out, const std::vector<preprocess::ModelInstance>& instances);
[[nodiscard]] std::vector<preprocess::ModelInstance> read_instances_csv(std::istream& in,
                                                                       const preprocess::WindowShape& shape);

/// Everything a model file carries besides the fitted parameters.
struct ModelContext {
    preprocess::Horizon horizon = preprocess::Horizon::OneMinute;
    preprocess::WindowShape shape;
    preprocess::SeasonalProfile profile;
    preprocess::FeatureScaler scaler;
    std::string dataset_hash;
    std::string config_hash;
    std::uint64_t seed = 0;
};

struct TmeModelFile {
    ModelContext context;
    tme::TrainConfig config;
    tme::Ensemble ensemble;
};

struct GarchModelFile {
    ModelContext context;
    garch::FittedArmaxGarch fit;
    std::vector<garch::AicRow> aic_table;
};

struct GbmModelFile {
    ModelContext context;
    gbm::GbmModel model;
    std::vector<gbm::SearchRow> search_table;
};

void save_model(const fs::path& path, const TmeModelFile& model);
void save_model(const fs::path& path, const GarchModelFile& model);
void save_model(const fs::path& path, const GbmModelFile& model);

/// "tme", "garch" or "gbm"; throws Io / MalformedRow on unreadable files.
[[nodiscard]] std::string model_type(const fs::path& path);
[[nodiscard]] TmeModelFile load_tme(const fs::path& path);
[[nodiscard]] GarchModelFile load_garch(const fs::path& path);
[[nodiscard]] GbmModelFile load_gbm(const fs::path& path);

/// Serialized tree in preorder with explicit leaf / split tags.
[[nodiscard]] std::string tree_to_json(const gbm::Tree& tree);
[[nodiscard]] gbm::Tree tree_from_json(const std::string& text);

/// JSON string with the fit report: coefficients, GARCH parameters with
/// standard errors and two-sided p-values, log-likelihood and AIC.
[[nodiscard]] std::string garch_report_json(const garch::FittedArmaxGarch& fit);

/// lag,acf,band
void write_acf_csv(std::ostream& out, const garch::Acf& acf);

/// t,mean_y,var_total_y,var_aleatoric_y,var_epistemic_y,gate_1..gate_S,mean_v,sd_v
struct ForecastRow {
    Epoch t = 0;
    tme::Forecast forecast;
    double mean_v = 0.0;
    double sd_v = 0.0;
};
void write_forecast_csv(std::ostream& out, const std::vector<ForecastRow>& rows, std::size_t sources);

}  // namespace volmix::io
